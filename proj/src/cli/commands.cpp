#include "qeval/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qeval/gateway/embedder.hpp"
#include "qeval/gateway/mock_provider.hpp"
#include "qeval/metrics.hpp"
#include "qeval/retrieval/scoring.hpp"
#include "qeval/suite.hpp"
#include "qeval/task.hpp"

namespace qeval::cli {

namespace fs = std::filesystem;
using retrieval::Corpus;
using report::format_percent;
using report::format_seconds;

namespace {

constexpr Corpus kCorpora[] = {Corpus::docs, Corpus::code};

std::unique_ptr<gateway::Gateway> make_gateway(const RunConfig& cfg) {
  gateway::GatewayOptions opts;
  opts.retry = cfg.gateway.retry;
  opts.max_concurrent_per_provider = cfg.gateway.max_concurrent_per_provider;
  opts.call_log = cfg.gateway.call_log;
  auto gw = std::make_unique<gateway::Gateway>(opts);
  gateway::MockScript script;
  if (!cfg.gateway.mock_script.empty()) {
    try {
      script = gateway::load_mock_script(cfg.gateway.mock_script);
    } catch (const std::exception& e) {
      throw ConfigError("gateway.mock_script: " + std::string(e.what()));
    }
  }
  gw->register_provider(std::make_shared<gateway::MockProvider>(std::move(script)));
  gw->register_providers_from_env();
  return gw;
}

std::shared_ptr<const gateway::Embedder> make_embedder(const RunConfig& cfg, gateway::Gateway& gw) {
  if (auto dim = gateway::feature_hash_dimension(cfg.embedder)) {
    return std::make_shared<gateway::FeatureHashEmbedder>(dim);
  }
  return std::make_shared<gateway::GatewayEmbedder>(gw, cfg.embedder);
}

std::vector<BenchmarkTask> load_suite(const RunConfig& cfg) {
  if (!fs::exists(cfg.suite_path)) throw ConfigError("suite_path: no such file " + cfg.suite_path.string());
  return load_tasks(cfg.suite_path);
}

// Every suite solution counts as leaked material, not only the current task's.
std::unique_ptr<retrieval::RetrievalEngine> make_engine(const RunConfig& cfg, gateway::Gateway& gw,
                                                        std::span<const Corpus> corpora,
                                                        std::span<const BenchmarkTask> tasks) {
  auto embedder = make_embedder(cfg, gw);
  std::vector<retrieval::CorpusIndex> indexes;
  for (Corpus c : corpora) indexes.push_back(retrieval::load_corpus_index(cfg.index_dir, c, embedder->id()));
  std::shared_ptr<const retrieval::PairScorer> cross;
  if (!cfg.cross_encoder.empty()) cross = std::make_shared<retrieval::GatewayCrossScorer>(gw, cfg.cross_encoder);
  std::vector<std::string> solutions;
  for (const auto& t : tasks) solutions.push_back(t.canonical_solution);
  return std::make_unique<retrieval::RetrievalEngine>(std::move(indexes), std::move(embedder), std::move(cross),
                                                      std::move(solutions));
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

void apply_overrides(RunConfig& cfg, const RunOverrides& o) {
  if (o.suite_path) cfg.suite_path = *o.suite_path;
  if (o.output_path) cfg.output_path = *o.output_path;
  if (o.strategy) {
    auto s = parse_strategy(*o.strategy);
    if (!s) throw ConfigError("--strategy: unknown strategy '" + *o.strategy + "'");
    cfg.strategy = *s;
    // Switching to zero_shot on the command line discards the file's retrieval settings.
    if (cfg.strategy == Strategy::zero_shot) {
      cfg.agent.retrieval.reset();
      if (!o.max_repairs) cfg.agent.max_repairs = 0;
    }
    if (cfg.strategy == Strategy::rag && !o.max_repairs) cfg.agent.max_repairs = 0;
  }
  if (o.max_repairs) cfg.agent.max_repairs = *o.max_repairs;
  if (o.model) cfg.agent.generator_model = *o.model;
  if (o.repair_model) cfg.agent.repair_model = *o.repair_model;
  if (o.repeats) cfg.repeats = *o.repeats;
  if (o.concurrency) cfg.concurrency = *o.concurrency;
  if (o.resume) cfg.resume = true;
  cfg.validate();
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  bool any = false;
  for (Corpus c : kCorpora) {
    auto it = cfg.corpus.roots.find(c);
    if (it == cfg.corpus.roots.end() || it->second.empty()) continue;
    std::string name(retrieval::to_string(c));
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (!fs::exists(it->second[i])) {
        throw ConfigError("corpus." + name + "[" + std::to_string(i) + "]: no such path " + it->second[i].string());
      }
    }
    auto chunks = retrieval::ingest_corpus(it->second, c, cfg.corpus.chunking);
    fs::path store = cfg.index_dir / name / "chunks.jsonl";
    fs::create_directories(store.parent_path());
    retrieval::save_chunks(store, chunks);
    out << name << ": " << chunks.size() << " chunks -> " << store.string() << "\n";
    any = true;
  }
  if (!any) throw ConfigError("corpus: no docs or code roots configured");
  return exit_ok;
}

int cmd_index(const RunConfig& cfg, std::ostream& out) {
  auto gw = make_gateway(cfg);
  auto embedder = make_embedder(cfg, *gw);
  bool any = false;
  for (Corpus c : kCorpora) {
    std::string name(retrieval::to_string(c));
    fs::path store = cfg.index_dir / name / "chunks.jsonl";
    bool configured = cfg.corpus.roots.count(c) && !cfg.corpus.roots.at(c).empty();
    if (!fs::exists(store)) {
      if (configured) {
        throw ConfigError("no chunk store for corpus '" + name + "' under " + cfg.index_dir.string() +
                          "; run `qeval ingest` first");
      }
      continue;
    }
    auto index = retrieval::CorpusIndex::build(c, retrieval::load_chunks(store), *embedder);
    retrieval::save_corpus_index(cfg.index_dir, index, cfg.corpus.chunking);
    out << name << ": indexed " << index.chunks.size() << " chunks with " << embedder->id() << "\n";
    any = true;
  }
  if (!any) {
    throw ConfigError("no chunk stores under " + cfg.index_dir.string() + "; run `qeval ingest` first");
  }
  return exit_ok;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  auto tasks = load_suite(cfg);
  auto gw = make_gateway(cfg);
  std::unique_ptr<retrieval::RetrievalEngine> engine;
  if (cfg.agent.retrieval) engine = make_engine(cfg, *gw, cfg.agent.retrieval->corpora, tasks);
  SandboxPool pool(cfg.concurrency);
  StrategyRunner runner(*gw, pool, engine.get());

  SuiteRunOptions opts;
  opts.strategy = cfg.strategy;
  opts.agent = cfg.agent;
  opts.concurrency = cfg.concurrency;
  opts.samples_per_task = cfg.samples_per_task;
  opts.config_hash = config_hash(cfg);
  opts.resume = cfg.resume;

  std::size_t harness_errors = 0;
  for (int r = 0; r < cfg.repeats; ++r) {
    opts.output_path = repeat_output_path(cfg, r);
    auto outcome = run_suite(tasks, opts, runner);
    auto summary = summarize(outcome.records);
    out << opts.output_path.string() << ": " << summary.model_label << " " << summary.strategy_label
        << " pass@1 " << format_percent(summary.overall_pass_rate) << "% over " << summary.task_count
        << " tasks, " << format_seconds(summary.total_wall_time) << " s";
    if (outcome.resumed) out << ", " << outcome.resumed << " resumed";
    if (outcome.harness_errors) out << ", " << outcome.harness_errors << " harness errors";
    out << "\n";
    harness_errors += outcome.harness_errors;
  }
  return harness_errors ? exit_harness_errors : exit_ok;
}

std::vector<AblationCell> ablation_grid() {
  using retrieval::Stage;
  struct Cascade {
    std::string label;
    std::vector<Stage> stages;
    bool fusion;
  };
  const std::vector<Cascade> cascades{
      {"dense", {Stage::dense}, false},
      {"dense>bm25>cosine_rerank", {Stage::dense, Stage::bm25, Stage::cosine_rerank}, false},
      {"dense>bm25>cosine_rerank>cross_rerank",
       {Stage::dense, Stage::bm25, Stage::cosine_rerank, Stage::cross_rerank}, false},
      {"dense+bm25 fused 2:1", {Stage::dense, Stage::bm25}, true},
  };
  const std::vector<std::pair<std::string, std::vector<Corpus>>> corpus_sets{
      {"docs", {Corpus::docs}}, {"docs+code", {Corpus::docs, Corpus::code}}};
  std::vector<AblationCell> grid;
  for (const auto& [corpora_label, corpora] : corpus_sets) {
    for (const auto& c : cascades) {
      AblationCell cell{corpora_label, c.label, {}};
      cell.retrieval.corpora = corpora;
      cell.retrieval.cascade = c.stages;
      if (c.fusion) cell.retrieval.fusion = retrieval::FusionWeights{};
      grid.push_back(std::move(cell));
    }
  }
  return grid;
}

int cmd_ablate_retrieval(const RunConfig& base, const AblationOptions& options, std::ostream& out) {
  if (options.depths.empty()) throw ConfigError("--depths: at least one depth is required");
  for (int d : options.depths) {
    if (d < 1) throw ConfigError("--depths: depth_k must be at least 1, got " + std::to_string(d));
  }
  RunConfig cfg = base;
  if (cfg.strategy == Strategy::zero_shot) cfg.strategy = Strategy::rag;
  auto tasks = load_suite(cfg);
  auto gw = make_gateway(cfg);
  auto engine = make_engine(cfg, *gw, kCorpora, tasks);
  SandboxPool pool(cfg.concurrency);
  StrategyRunner runner(*gw, pool, engine.get());

  std::ostringstream csv;
  csv << "corpora,cascade,depth_k,pass_at_1_pct,total_time_s,tasks,harness_errors\n";
  std::size_t harness_errors = 0;
  for (const auto& cell : ablation_grid()) {
    for (int depth : options.depths) {
      RunConfig run = cfg;
      run.agent.retrieval = cell.retrieval;
      if (base.agent.retrieval) {
        run.agent.retrieval->metric = base.agent.retrieval->metric;
        run.agent.retrieval->leakage_filter_on = base.agent.retrieval->leakage_filter_on;
        run.agent.retrieval->leakage_threshold = base.agent.retrieval->leakage_threshold;
        run.agent.retrieval->context_token_cap = base.agent.retrieval->context_token_cap;
      }
      run.agent.retrieval->depth_k = depth;
      run.validate();

      SuiteRunOptions opts;
      opts.strategy = run.strategy;
      opts.agent = run.agent;
      opts.concurrency = run.concurrency;
      opts.samples_per_task = run.samples_per_task;
      opts.config_hash = config_hash(run);
      if (!options.runs_dir.empty()) {
        std::string name = cell.corpora + "_" + cell.cascade + "_k" + std::to_string(depth) + ".jsonl";
        for (char& ch : name) {
          if (ch == '>' || ch == ' ' || ch == ':' || ch == '+') ch = '-';
        }
        opts.output_path = options.runs_dir / name;
      }
      auto outcome = run_suite(tasks, opts, runner);
      auto summary = summarize(outcome.records);
      harness_errors += outcome.harness_errors;
      csv << cell.corpora << "," << cell.cascade << "," << depth << "," << format_percent(summary.overall_pass_rate)
          << "," << format_seconds(summary.total_wall_time) << "," << summary.task_count << ","
          << outcome.harness_errors << "\n";
      out << cell.corpora << " " << cell.cascade << " k=" << depth << ": "
          << format_percent(summary.overall_pass_rate) << "%\n";
    }
  }
  write_file(options.csv_path, csv.str());
  out << "wrote " << options.csv_path.string() << "\n";
  return harness_errors ? exit_harness_errors : exit_ok;
}

int cmd_report(const ReportOptions& options, std::ostream& out) {
  options.spec.validate();
  for (const auto& p : report::render_summary(options.spec)) out << "wrote " << p.string() << "\n";
  if (options.tiers) {
    for (const auto& p : report::render_tier_breakdown(options.spec)) out << "wrote " << p.string() << "\n";
  }
  if (options.consistency) {
    auto consistency = report::consistency_check(options.spec.inputs);
    fs::path path = options.spec.output_dir / "consistency.md";
    write_file(path, report::consistency_markdown(consistency));
    out << "wrote " << path.string() << " (spread " << format_percent(consistency.spread) << " points)\n";
  }
  return exit_ok;
}

int cmd_selfcheck(const RunConfig& cfg, std::ostream& out) {
  if (cfg.agent.sandbox.interpreter_command.empty()) {
    throw ConfigError("sandbox.interpreter_command: required (interpreter and runner shim)");
  }
  auto tasks = load_suite(cfg);
  SandboxPool pool(cfg.concurrency);
  std::vector<ExecutionResult> results(tasks.size());
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < std::min(cfg.concurrency, tasks.size()); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        results[i] = pool.execute(assemble_payload(tasks[i], tasks[i].canonical_solution), cfg.agent.sandbox);
      }
    });
  }
  for (auto& t : workers) t.join();
  int passed = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (results[i].status == ExecStatus::pass) {
      ++passed;
      continue;
    }
    out << tasks[i].task_id << ": " << to_string(results[i].status);
    if (results[i].error_class) out << " (" << *results[i].error_class << ")";
    out << "\n";
  }
  int total = static_cast<int>(tasks.size());
  out << passed << "/" << total << " canonical pass\n";
  return passed == total ? exit_ok : exit_harness_errors;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const retrieval::MissingIndexError& e) {
    err << "missing index: " << e.what() << "\n";
    return exit_config;
  } catch (const retrieval::ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const TaskFormatError& e) {
    err << "invalid suite: " << e.what() << "\n";
    return exit_config;
  } catch (const ResultsFormatError& e) {
    err << "results file: " << e.what() << "\n";
    return exit_config;
  } catch (const report::ReportError& e) {
    err << "report: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_infrastructure;
  }
}

}  // namespace qeval::cli
