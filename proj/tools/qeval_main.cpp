#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "qeval/cli/commands.hpp"

using namespace qeval;
using namespace qeval::cli;

namespace {

// Runs a command and reports any failure through the logger.
int dispatch(const std::function<int()>& fn) {
  std::ostringstream err;
  int code = guarded(fn, err);
  std::string msg = err.str();
  if (!msg.empty()) {
    if (msg.back() == '\n') msg.pop_back();
    spdlog::error("{}", msg);
  }
  return code;
}

RunConfig load(const std::string& path) {
  auto cfg = load_run_config(path);
  spdlog::debug("config {} hash {}", path, config_hash(cfg));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("qeval");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^%l%$: %v");

  CLI::App app{"qeval: quantum code generation benchmark harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  };

  auto* ingest = app.add_subcommand("ingest", "Chunk the configured corpora into chunk stores");
  add_config(ingest);
  auto* index = app.add_subcommand("index", "Build dense and BM25 indexes from the chunk stores");
  add_config(index);

  RunOverrides overrides;
  auto* run = app.add_subcommand("run", "Evaluate the suite and write results files");
  add_config(run);
  run->add_option("--suite", overrides.suite_path, "Override suite_path");
  run->add_option("-o,--output", overrides.output_path, "Override output_path");
  run->add_option("--strategy", overrides.strategy, "zero_shot, rag or agent");
  run->add_option("--max-repairs", overrides.max_repairs, "Override agent.max_repairs");
  run->add_option("--model", overrides.model, "Override agent.generator_model");
  run->add_option("--repair-model", overrides.repair_model, "Override agent.repair_model");
  run->add_option("--repeats", overrides.repeats, "Override repeats");
  run->add_option("-j,--concurrency", overrides.concurrency, "Override concurrency");
  run->add_flag("--resume", overrides.resume, "Continue an interrupted results file");

  AblationOptions ablation;
  std::string ablation_csv = "ablation.csv";
  std::string runs_dir;
  auto* ablate = app.add_subcommand("ablate-retrieval", "Sweep depth, corpus set and cascade");
  add_config(ablate);
  ablate->add_option("--suite", overrides.suite_path, "Override suite_path");
  ablate->add_option("--model", overrides.model, "Override agent.generator_model");
  ablate->add_option("-j,--concurrency", overrides.concurrency, "Override concurrency");
  ablate->add_option("--depths", ablation.depths, "depth_k values")->delimiter(',');
  ablate->add_option("-o,--output", ablation_csv, "Comparison CSV path");
  ablate->add_option("--runs-dir", runs_dir, "Also keep every cell's results file here");

  ReportOptions report_opts;
  std::vector<std::string> inputs;
  std::vector<std::string> formats;
  std::string out_dir = ".";
  std::string baseline_label = "Param-Spec.";
  std::optional<double> baseline_pct;
  auto* report = app.add_subcommand("report", "Render tables and figures from results files");
  report->add_option("inputs", inputs, "Results files")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out-dir", out_dir, "Output directory");
  report->add_option("-f,--format", formats, "csv, md or svg (repeatable; default all)");
  report->add_option("--baseline", baseline_pct, "Baseline pass@1 in percent, e.g. 46.5")->check(CLI::Range(0.0, 100.0));
  report->add_option("--baseline-label", baseline_label, "Row label for the baseline");
  report->add_flag("--tiers", report_opts.tiers, "Also write the per-tier breakdown");
  report->add_flag("--consistency", report_opts.consistency, "Also check agreement between repeats");

  auto* selfcheck = app.add_subcommand("selfcheck", "Run every canonical solution through the sandbox");
  add_config(selfcheck);
  selfcheck->add_option("--suite", overrides.suite_path, "Override suite_path");
  selfcheck->add_option("-j,--concurrency", overrides.concurrency, "Override concurrency");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  if (ingest->parsed()) return dispatch([&] { return cmd_ingest(load(config_path), std::cout); });
  if (index->parsed()) return dispatch([&] { return cmd_index(load(config_path), std::cout); });
  if (run->parsed()) {
    return dispatch([&] {
      auto cfg = load(config_path);
      apply_overrides(cfg, overrides);
      return cmd_run(cfg, std::cout);
    });
  }
  if (ablate->parsed()) {
    return dispatch([&] {
      auto cfg = load(config_path);
      apply_overrides(cfg, overrides);
      ablation.csv_path = ablation_csv;
      ablation.runs_dir = runs_dir;
      return cmd_ablate_retrieval(cfg, ablation, std::cout);
    });
  }
  if (report->parsed()) {
    return dispatch([&] {
      auto& spec = report_opts.spec;
      spec.inputs.assign(inputs.begin(), inputs.end());
      spec.output_dir = out_dir;
      if (!formats.empty()) {
        spec.formats.clear();
        for (const auto& f : formats) {
          auto parsed = report::parse_format(f);
          if (!parsed) throw ConfigError("--format: unknown format '" + f + "'");
          spec.formats.insert(*parsed);
        }
      }
      if (baseline_pct) spec.baseline = report::Baseline{baseline_label, *baseline_pct / 100.0};
      return cmd_report(report_opts, std::cout);
    });
  }
  return dispatch([&] {
    auto cfg = load(config_path);
    if (overrides.suite_path) cfg.suite_path = *overrides.suite_path;
    if (overrides.concurrency) cfg.concurrency = *overrides.concurrency;
    return cmd_selfcheck(cfg, std::cout);
  });
}
