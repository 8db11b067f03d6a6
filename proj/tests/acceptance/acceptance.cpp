// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// nonzero when any criterion fails. Everything except criterion 11 runs
// hermetically (mock provider, feature-hash embedder, local interpreter).

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qeval/cli/commands.hpp"
#include "qeval/gateway/mock_provider.hpp"
#include "qeval/metrics.hpp"
#include "qeval/retrieval/bm25_index.hpp"
#include "qeval/retrieval/dense_index.hpp"
#include "qeval/retrieval/scoring.hpp"
#include "qeval/suite.hpp"
#include "synthetic_suite.hpp"
#include "test_support.hpp"

using namespace qeval;
using namespace qeval::retrieval;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Kind { pass, fail, skip } kind = pass;
  std::string detail;
};

Outcome failed(std::string detail) { return {Outcome::fail, std::move(detail)}; }

// Collects the first few mismatches of a criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 5) detail_ += (detail_.empty() ? "" : "; ") + what;
  }
  Outcome outcome(std::string pass_detail = "") const {
    if (failures_ == 0) return {Outcome::pass, std::move(pass_detail)};
    return failed(std::to_string(failures_) + " mismatches: " + detail_);
  }

 private:
  int failures_ = 0;
  std::string detail_;
};

gateway::GatewayOptions quiet_gateway() {
  gateway::GatewayOptions o;
  o.sleeper = [](double) {};
  return o;
}

// Every mock used by criteria 2 and 3, for the isolation scan of criterion 9.
struct Trace {
  std::vector<BenchmarkTask> tasks;
  std::vector<gateway::GenerationRequest> requests;
};
std::vector<Trace> g_traces;

struct MockRun {
  std::shared_ptr<gateway::MockProvider> mock;
  gateway::Gateway gateway{quiet_gateway()};
  SandboxPool pool{2};
  StrategyRunner runner{gateway, pool};

  explicit MockRun(gateway::MockScript script) : mock(std::make_shared<gateway::MockProvider>(std::move(script))) {
    gateway.register_provider(mock);
  }
  void record_trace(std::vector<BenchmarkTask> tasks) { g_traces.push_back({std::move(tasks), mock->requests()}); }
};

AgentConfig agent_config(int repairs) {
  AgentConfig cfg;
  cfg.max_repairs = repairs;
  cfg.generator_model = "mock:gen";
  cfg.sandbox = testing::shim_config(30.0);
  return cfg;
}

// 1. pass@k against exhaustive subset enumeration.
Outcome pass_at_k_oracle() {
  Checker check;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      unsigned correct = (1u << c) - 1u;
      for (int k = 1; k <= n; ++k) {
        long long total = 0, hit = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (std::popcount(mask) != k) continue;
          ++total;
          hit += (mask & correct) ? 1 : 0;
        }
        double expected = static_cast<double>(hit) / static_cast<double>(total);
        double got = pass_at_k(n, c, k);
        std::ostringstream what;
        what << "n=" << n << " c=" << c << " k=" << k << " got " << got << " want " << expected;
        check.expect(std::abs(got - expected) <= 1e-12, what.str());
      }
    }
  }
  return check.outcome();
}

// 2. Scripted mock over the 12-task synthetic suite.
Outcome synthetic_end_to_end() {
  auto tasks = synthetic::tasks();
  Checker check;
  auto passes = [](const SuiteRunOutcome& o) {
    return static_cast<int>(std::count_if(o.records.begin(), o.records.end(),
                                          [](const RunRecord& r) { return r.final_status == ExecStatus::pass; }));
  };

  MockRun zero(synthetic::script());
  SuiteRunOptions opts;
  opts.strategy = Strategy::zero_shot;
  opts.agent = agent_config(0);
  opts.concurrency = 2;
  auto z = run_suite(tasks, opts, zero.runner);
  zero.record_trace(tasks);

  MockRun agent(synthetic::script());
  opts.strategy = Strategy::agent;
  opts.agent = agent_config(5);
  auto a = run_suite(tasks, opts, agent.runner);
  agent.record_trace(tasks);

  int zp = passes(z), ap = passes(a);
  check.expect(zp == 5, "zero-shot passed " + std::to_string(zp) + "/12, want 5");
  check.expect(ap == 8, "agent(5) passed " + std::to_string(ap) + "/12, want 8");
  check.expect(summarize(z.records).overall_pass_rate == 5.0 / 12.0, "zero-shot pass@1 != 5/12");
  check.expect(summarize(a.records).overall_pass_rate == 8.0 / 12.0, "agent pass@1 != 8/12");
  for (const auto* run : {&z, &a}) {
    for (const auto& r : run->records) {
      check.expect(r.executions_count <= 6, r.task_id + " used " + std::to_string(r.executions_count) + " executions");
      check.expect(r.final_status != ExecStatus::harness_error, r.task_id + " harness_error: " + r.harness_note);
    }
  }
  return check.outcome("zero-shot 5/12 = 41.7%, agent(5) 8/12 = 66.7%");
}

// 3. Repair budget is spent exactly; a first-attempt pass stops the loop.
Outcome agent_bound_and_halt() {
  Checker check;
  auto task = synthetic::tasks().at(0);

  gateway::MockScript always_fail;
  always_fail.default_completion = "    return -1\n";
  MockRun failing(always_fail);
  for (int n = 1; n <= 5; ++n) {
    auto rec = failing.runner.run_agent(task, agent_config(n));
    check.expect(rec.executions_count == 1 + n,
                 "max_repairs=" + std::to_string(n) + " gave " + std::to_string(rec.executions_count));
    check.expect(rec.attempts.size() == static_cast<std::size_t>(1 + n), "attempt count mismatch");
    check.expect(rec.final_status == ExecStatus::fail, "always-fail task did not fail");
  }
  failing.record_trace({task});

  gateway::MockScript first_try;
  first_try.default_completion = "```python\ndef calc_0(x):\n" + synthetic::canonical_body(0) + "```\n";
  MockRun passing(first_try);
  for (int n = 1; n <= 5; ++n) {
    auto rec = passing.runner.run_agent(task, agent_config(n));
    check.expect(rec.executions_count == 1, "pass-on-attempt-0 used " + std::to_string(rec.executions_count));
    check.expect(rec.final_status == ExecStatus::pass, "pass-on-attempt-0 did not pass");
  }
  passing.record_trace({task});
  return check.outcome();
}

bool process_with_token_alive(const std::string& token) {
  for (const auto& entry : fs::directory_iterator("/proc")) {
    auto name = entry.path().filename().string();
    if (name.find_first_not_of("0123456789") != std::string::npos) continue;
    std::ifstream stat(entry.path() / "stat");
    std::string line;
    std::getline(stat, line);
    auto close = line.rfind(')');
    if (close != std::string::npos && close + 2 < line.size() && line[close + 2] == 'Z') continue;
    std::ifstream in(entry.path() / "cmdline", std::ios::binary);
    std::string cmdline((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (cmdline.find(token) != std::string::npos) return true;
  }
  return false;
}

// 4. Infinite loop under a 2 s timeout, with a grandchild that must not survive.
Outcome timeout_enforcement() {
  const std::string token = "qeval-acceptance-" + std::to_string(std::random_device{}());
  auto task = testing::arithmetic_task("loop/0", "spin", "    return x\n",
                                       "def check(candidate):\n    assert candidate(1) == 1\n");
  std::string candidate =
      "    import subprocess, sys\n"
      "    subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(1000)', '" + token + "'])\n"
      "    while True:\n"
      "        pass\n";
  auto t0 = std::chrono::steady_clock::now();
  auto r = execute_with_timeout(assemble_payload(task, candidate), testing::shim_config(2.0));
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  Checker check;
  check.expect(r.status == ExecStatus::timeout, "verdict " + std::string(to_string(r.status)));
  check.expect(elapsed >= 2.0 && elapsed <= 7.0, "wall time " + std::to_string(elapsed) + " s");
  check.expect(!process_with_token_alive(token), "orphan process survived");
  std::ostringstream detail;
  detail << "timeout after " << std::fixed << std::setprecision(2) << elapsed << " s, no orphans";
  return check.outcome(detail.str());
}

// 5. Dense top-k against a long-double full scan.
std::vector<std::string> brute_force_topk(const std::vector<std::vector<float>>& rows,
                                          const std::vector<std::string>& ids, const std::vector<float>& q,
                                          Metric metric, std::size_t k) {
  std::vector<std::pair<long double, std::string>> scored;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    long double dot = 0, qq = 0, vv = 0, dist = 0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      long double a = q[d], b = rows[i][d];
      dot += a * b;
      qq += a * a;
      vv += b * b;
      dist += (a - b) * (a - b);
    }
    long double s = metric == Metric::l2 ? -std::sqrt(dist)
                                         : (qq > 0 && vv > 0 ? dot / (std::sqrt(qq) * std::sqrt(vv)) : 0.0L);
    scored.emplace_back(s, ids[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

ChunkPtr make_chunk(const std::string& id, std::string text = "") {
  Chunk c;
  c.chunk_id = id;
  c.source_path = id;
  c.text = text.empty() ? id : std::move(text);
  return std::make_shared<const Chunk>(std::move(c));
}

Outcome dense_exactness() {
  std::mt19937_64 rng(20240501);
  Checker check;
  int queries = 0;
  for (int corpus = 0; corpus < 50; ++corpus) {
    std::size_t dim = std::uniform_int_distribution<std::size_t>(4, 64)(rng);
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    bool coarse = corpus % 3 == 0;  // small integer grid: many exact ties
    std::uniform_real_distribution<float> real(-1.0f, 1.0f);
    std::uniform_int_distribution<int> grid(-2, 2);
    auto draw = [&] {
      std::vector<float> v(dim);
      for (auto& x : v) x = coarse ? static_cast<float>(grid(rng)) : real(rng);
      return v;
    };
    std::vector<std::vector<float>> rows;
    std::vector<std::string> ids;
    std::vector<ChunkPtr> chunks;
    for (std::size_t i = 0; i < n; ++i) {
      // Some rows duplicate an earlier one so equal scores are guaranteed.
      if (i > 0 && rng() % 5 == 0) rows.push_back(rows[rng() % i]);
      else rows.push_back(draw());
      std::ostringstream id;
      id << "c" << (rng() % 1000) << "-" << i;
      ids.push_back(id.str());
      chunks.push_back(make_chunk(id.str()));
    }
    auto index = DenseIndex::from_vectors("toy", chunks, rows);
    for (int qi = 0; qi < 3; ++qi) {
      std::vector<float> q = qi == 0 ? rows[rng() % n] : draw();
      for (Metric metric : {Metric::l2, Metric::cosine}) {
        for (std::size_t k = 1; k <= 10; ++k) {
          auto got = index.query(EmbeddedQuery{"toy", q}, k, metric);
          std::vector<std::string> got_ids;
          for (const auto& s : got) got_ids.push_back(s.chunk->chunk_id);
          ++queries;
          check.expect(got_ids == brute_force_topk(rows, ids, q, metric, k),
                       "corpus " + std::to_string(corpus) + " dim " + std::to_string(dim) + " k " +
                           std::to_string(k) + " metric " + std::string(to_string(metric)));
        }
      }
    }
  }
  return check.outcome(std::to_string(queries) + " queries");
}

// 6. BM25 worked example and properties.
double bm25_reference(const std::vector<std::vector<std::string>>& docs, std::size_t target,
                      const std::vector<std::string>& query) {
  const double k1 = 1.5, b = 0.75;
  double avgdl = 0;
  for (const auto& d : docs) avgdl += static_cast<double>(d.size());
  avgdl /= static_cast<double>(docs.size());
  std::set<std::string> terms(query.begin(), query.end());
  double score = 0;
  for (const auto& t : terms) {
    double df = 0;
    for (const auto& d : docs) df += std::find(d.begin(), d.end(), t) != d.end() ? 1 : 0;
    double tf = static_cast<double>(std::count(docs[target].begin(), docs[target].end(), t));
    if (tf == 0) continue;
    double idf = std::log(1.0 + (static_cast<double>(docs.size()) - df + 0.5) / (df + 0.5));
    score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(docs[target].size()) / avgdl));
  }
  return score;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

Outcome bm25_oracle() {
  Checker check;
  auto single = Bm25Index::build({make_chunk("d0", "quantum circuit depth")});
  double worked = single.score_of("circuit", "d0");
  check.expect(std::abs(worked - 0.2877) <= 1e-4, "worked example scored " + std::to_string(worked));
  check.expect(std::abs(worked - std::log(1.0 + 0.5 / 1.5)) <= 1e-12, "worked example != ln(4/3)");

  std::mt19937_64 rng(77);
  std::vector<std::string> vocab;
  for (int i = 0; i < 30; ++i) vocab.push_back("term" + std::to_string(i));
  for (int corpus = 0; corpus < 100; ++corpus) {
    std::size_t n = 1 + rng() % 20;
    std::vector<std::vector<std::string>> docs;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> d(1 + rng() % 15);
      for (auto& w : d) w = vocab[rng() % 20];  // term20..term29 never appear in the random docs
      docs.push_back(std::move(d));
    }
    // Two docs of equal length: the query term twice versus once.
    const std::string t = vocab[rng() % 20];
    std::size_t len = 4 + rng() % 6;
    std::vector<std::string> twice{t, t}, once{t};
    while (twice.size() < len) twice.push_back(vocab[20 + rng() % 10]);
    while (once.size() < len) once.push_back(vocab[20 + rng() % 10]);
    docs.push_back(twice);
    docs.push_back(once);

    std::vector<ChunkPtr> chunks;
    for (std::size_t i = 0; i < docs.size(); ++i) chunks.push_back(make_chunk("doc" + std::to_string(i), join(docs[i])));
    auto index = Bm25Index::build(chunks);
    std::string twice_id = "doc" + std::to_string(docs.size() - 2), once_id = "doc" + std::to_string(docs.size() - 1);
    check.expect(index.score_of(t, twice_id) > index.score_of(t, once_id), "tf=2 did not outscore tf=1");

    std::vector<std::string> query{vocab[rng() % 30], vocab[rng() % 30], vocab[rng() % 30]};
    auto ranked = index.query(join(query), docs.size());
    std::set<std::string> returned;
    for (const auto& s : ranked) returned.insert(s.chunk->chunk_id);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      std::string id = "doc" + std::to_string(i);
      double got = index.score_of(join(query), id);
      double want = bm25_reference(docs, i, query);
      check.expect(std::abs(got - want) <= 1e-9, id + " scored " + std::to_string(got) + " want " + std::to_string(want));
      bool shares = std::any_of(query.begin(), query.end(), [&](const std::string& q) {
        return std::find(docs[i].begin(), docs[i].end(), q) != docs[i].end();
      });
      if (!shares) {
        check.expect(got == 0.0, id + " has no query term but scored " + std::to_string(got));
        check.expect(!returned.count(id), id + " has no query term but was returned");
      }
    }
    std::string absent = vocab[20 + rng() % 10];
    for (const auto& s : index.query(absent + "zzz", docs.size())) {
      check.expect(s.score > 0.0, "zero-score document returned");
    }
  }
  return check.outcome("worked example " + std::to_string(worked));
}

// 7. Fusion degenerates to one side when the other weight is 0.
std::vector<std::string> sorted_ids(std::vector<ScoredChunk> list, std::size_t k) {
  std::sort(list.begin(), list.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    return a.score != b.score ? a.score > b.score : a.chunk->chunk_id < b.chunk->chunk_id;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, list.size()); ++i) ids.push_back(list[i].chunk->chunk_id);
  return ids;
}

std::vector<std::string> ids_of(const std::vector<ScoredChunk>& list) {
  std::vector<std::string> ids;
  for (const auto& s : list) ids.push_back(s.chunk->chunk_id);
  return ids;
}

Outcome fusion_degeneration() {
  Checker check;
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ChunkPtr> pool;
    for (int i = 0; i < 30; ++i) pool.push_back(make_chunk("ch" + std::to_string(rng() % 100000) + "-" + std::to_string(i)));
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t nd = 1 + rng() % 20, ns = 1 + rng() % 20;
    bool negative = trial % 2 == 0;  // L2-style negated distances
    std::uniform_real_distribution<double> score(negative ? -10.0 : 0.0, negative ? 0.0 : 10.0);
    std::vector<ScoredChunk> dense, sparse;
    for (std::size_t i = 0; i < nd; ++i) dense.push_back({pool[i], trial % 7 == 0 ? std::round(score(rng)) : score(rng), "dense"});
    for (std::size_t i = 0; i < ns; ++i) sparse.push_back({pool[(i + rng() % 10) % pool.size()], score(rng), "bm25"});
    // Sparse list must not repeat a chunk.
    std::set<std::string> seen;
    std::erase_if(sparse, [&](const ScoredChunk& s) { return !seen.insert(s.chunk->chunk_id).second; });
    std::size_t k = 1 + rng() % 25;
    check.expect(ids_of(fuse_scores(dense, sparse, 2.0, 0.0, k)) == sorted_ids(dense, k),
                 "trial " + std::to_string(trial) + ": w_sparse=0 changed the dense order");
    check.expect(ids_of(fuse_scores(dense, sparse, 0.0, 1.0, k)) == sorted_ids(sparse, k),
                 "trial " + std::to_string(trial) + ": w_dense=0 changed the sparse order");
  }

  auto a = make_chunk("A"), b = make_chunk("B");
  auto tie = fuse_scores({{a, 1.0, "dense"}, {b, 0.5, "dense"}}, {{b, 1.0, "bm25"}, {a, 0.0, "bm25"}}, 2.0, 1.0, 2);
  check.expect(tie.size() == 2 && tie[0].chunk->chunk_id == "A" && tie[0].score == 2.0 && tie[1].score == 2.0,
               "A:1.0/B:0.5 vs B:1.0/A:0.0 should fuse to A=2.0, B=2.0 with A first");
  auto clear = fuse_scores({{a, 1.0, "dense"}, {b, 0.0, "dense"}}, {{b, 1.0, "bm25"}, {a, 0.0, "bm25"}}, 2.0, 1.0, 2);
  check.expect(clear.size() == 2 && clear[0].chunk->chunk_id == "A" && clear[0].score == 2.0 && clear[1].score == 1.0,
               "A:1.0/B:0.0 vs B:1.0/A:0.0 should fuse to A=2.0 > B=1.0");
  return check.outcome();
}

// 8. Leakage filter.
std::set<std::string> shingles(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> toks{std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
  std::set<std::string> out;
  for (std::size_t i = 0; i + 8 <= toks.size(); ++i) {
    std::string s;
    for (std::size_t j = i; j < i + 8; ++j) s += toks[j] + "\x1f";
    out.insert(s);
  }
  return out;
}

double jaccard(const std::string& a, const std::string& b) {
  auto sa = shingles(a), sb = shingles(b);
  std::size_t common = 0;
  for (const auto& s : sa) common += sb.count(s);
  std::size_t uni = sa.size() + sb.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

std::string token_run(const std::string& prefix, int from, int to) {
  std::string s;
  for (int i = from; i < to; ++i) s += prefix + std::to_string(i) + " ";
  return s;
}

Outcome leakage_filtering() {
  Checker check;
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int len = 8 + static_cast<int>(rng() % 60);
    std::string solution;
    for (int i = 0; i < len; ++i) solution += "s" + std::to_string(rng() % 12) + " ";
    std::vector<std::string> solutions{solution};
    std::string unrelated = token_run("u", 0, 8 + static_cast<int>(rng() % 40));
    std::vector<ScoredChunk> chunks{{make_chunk("a", unrelated), 1.0, "dense"},
                                    {make_chunk("b", solution), 0.5, "dense"}};
    // Near-copies: the solution with a random span replaced.
    for (int m = 0; m < 6; ++m) {
      std::istringstream in(solution);
      std::vector<std::string> toks{std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
      std::size_t cut = rng() % toks.size();
      for (std::size_t j = cut; j < std::min(toks.size(), cut + rng() % 6); ++j) toks[j] = "x" + std::to_string(m);
      chunks.push_back({make_chunk("m" + std::to_string(m), join(toks)), 0.1 * m, "dense"});
    }
    auto once = leakage_filter(chunks, solutions, 0.6);
    auto ids = ids_of(once);
    check.expect(std::find(ids.begin(), ids.end(), "b") == ids.end(), "identical chunk survived");
    check.expect(std::find(ids.begin(), ids.end(), "a") != ids.end(), "zero-overlap chunk removed");
    check.expect(ids_of(leakage_filter(once, solutions, 0.6)) == ids, "filter is not idempotent");
    std::vector<std::string> expected;
    for (const auto& c : chunks) {
      if (jaccard(c.chunk->text, solution) < 0.6) expected.push_back(c.chunk->chunk_id);
    }
    check.expect(ids == expected, "survivors differ from the shingle-Jaccard oracle in trial " + std::to_string(trial));
  }

  // 27 distinct tokens give 20 shingles; the first 21 tokens share 14 of them (Jaccard 0.7).
  std::string solution = token_run("t", 0, 27);
  std::string seventy = token_run("t", 0, 21);
  std::string fifty_five = token_run("t", 0, 18);
  check.expect(std::abs(jaccard(seventy, solution) - 0.7) < 1e-12, "constructed chunk is not at Jaccard 0.7");
  check.expect(std::abs(jaccard(fifty_five, solution) - 0.55) < 1e-12, "constructed chunk is not at Jaccard 0.55");
  std::vector<std::string> sols{solution};
  auto kept = ids_of(leakage_filter({{make_chunk("seventy", seventy), 1.0, "dense"},
                                     {make_chunk("fifty_five", fifty_five), 1.0, "dense"}},
                                    sols, 0.6));
  check.expect(kept == std::vector<std::string>{"fifty_five"}, "0.7 chunk should go, 0.55 chunk should stay");
  return check.outcome();
}

// 9. No 20-character substring of the ground truth reaches a model.
Outcome ground_truth_isolation() {
  if (g_traces.empty()) return failed("no traces recorded by criteria 2-3");
  Checker check;
  std::size_t messages = 0;
  for (const auto& trace : g_traces) {
    std::map<std::string, const BenchmarkTask*> by_id;
    for (const auto& t : trace.tasks) by_id[t.task_id] = &t;
    for (const auto& req : trace.requests) {
      auto it = by_id.find(req.context.task_id);
      if (it == by_id.end()) {
        check.expect(false, "request for unknown task " + req.context.task_id);
        continue;
      }
      for (const auto& m : req.messages) {
        ++messages;
        for (const std::string* secret : {&it->second->canonical_solution, &it->second->test}) {
          for (std::size_t i = 0; i + 20 <= secret->size(); ++i) {
            check.expect(m.content.find(secret->substr(i, 20)) == std::string::npos,
                         req.context.task_id + " " + m.role + " message leaks \"" + secret->substr(i, 20) + "\"");
          }
        }
      }
    }
  }
  return check.outcome(std::to_string(messages) + " messages scanned");
}

// 10. Five repeats through the CLI path are identical modulo timing.
struct Workspace {
  testing::ScratchDir dir;
  cli::RunConfig cfg;
};

Workspace* g_repeat_workspace = nullptr;

Outcome repeat_determinism(Workspace& ws) {
  auto tasks = synthetic::tasks();
  save_tasks(ws.dir / "suite.jsonl", tasks);
  ws.dir.write("mock.json", gateway::to_json(synthetic::script()).dump());
  ws.dir.write("docs/arith.md",
               "# Arithmetic helpers\n\nMultiply the input by a factor, then add an offset.\n\n"
               "# Errors\n\nDivision by zero raises ZeroDivisionError; unknown names raise NameError.\n");
  ws.dir.write("code/util.py", "def scale(x, k):\n    return x * k\n\n\ndef shift(x, b):\n    return x + b\n");
  auto shim = testing::shim_config(30.0);
  json j{{"suite_path", "suite.jsonl"},
         {"strategy", "agent"},
         {"agent", {{"max_repairs", 5}, {"generator_model", "mock:gen"}}},
         {"retrieval", {{"depth_k", 2}, {"corpora", {"docs", "code"}}, {"cascade", {"dense", "bm25"}},
                        {"fusion", {{"w_dense", 2.0}, {"w_sparse", 1.0}}}}},
         {"sandbox", {{"timeout_seconds", shim.timeout_seconds}, {"interpreter_command", shim.interpreter_command}}},
         {"gateway", {{"mock_script", "mock.json"}}},
         {"corpus", {{"docs", {"docs"}}, {"code", {"code"}}}},
         {"embedder", "hash-256"},
         {"output_path", "runs/agent.jsonl"},
         {"repeats", 5},
         {"concurrency", 3}};
  ws.cfg = cli::parse_run_config(j, ws.dir.path());
  ws.cfg.validate();
  std::ostringstream out, err;
  if (cli::guarded([&] { return cli::cmd_ingest(ws.cfg, out); }, err) != 0 ||
      cli::guarded([&] { return cli::cmd_index(ws.cfg, out); }, err) != 0) {
    return failed("index build failed: " + err.str());
  }
  int code = cli::guarded([&] { return cli::cmd_run(ws.cfg, out); }, err);
  if (code != cli::exit_ok) return failed("run exited " + std::to_string(code) + ": " + err.str());

  std::vector<fs::path> files;
  for (int r = 0; r < 5; ++r) files.push_back(cli::repeat_output_path(ws.cfg, r));
  Checker check;
  auto report = report::consistency_check(files);
  check.expect(report.spread == 0.0, "spread " + std::to_string(report.spread));
  check.expect(report.disagreements.empty(), "tasks disagree between repeats");

  auto stripped_lines = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(strip_timing(json::parse(line)).dump());
    return lines;
  };
  auto first = stripped_lines(files[0]);
  check.expect(first.size() == 1 + tasks.size(), "results file has " + std::to_string(first.size()) + " lines");
  for (std::size_t r = 1; r < files.size(); ++r) {
    check.expect(stripped_lines(files[r]) == first, files[r].filename().string() + " differs from the first repeat");
  }
  auto records = read_results(files[0]).records;
  check.expect(std::all_of(records.begin(), records.end(),
                           [](const RunRecord& rec) { return rec.retrieval_chunk_ids && !rec.retrieval_chunk_ids->empty(); }),
               "records lack retrieval context");
  g_repeat_workspace = &ws;
  std::ostringstream detail;
  detail << "5 repeats, pass@1 " << report::format_percent(report.mean) << "%, spread 0";
  return check.outcome(detail.str());
}

// 11. Live path when available; the baseline row is always checked.
Outcome baseline_renders() {
  if (!g_repeat_workspace) return failed("no measured results from criterion 10");
  auto& ws = *g_repeat_workspace;
  report::ReportSpec spec;
  spec.inputs = {cli::repeat_output_path(ws.cfg, 0)};
  spec.baseline = report::Baseline{"Param-Spec.", 0.465};
  spec.output_dir = ws.dir / "report";
  report::render_summary(spec);
  std::ifstream csv(spec.output_dir / "summary.csv"), svg(spec.output_dir / "summary.svg");
  std::string csv_text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
  std::string svg_text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  Checker check;
  check.expect(csv_text.find("\nParam-Spec.,,46.5,") != std::string::npos, "baseline row missing from summary.csv");
  check.expect(csv_text.find("\nmock:gen,rag+agent(5),") != std::string::npos, "measured row missing from summary.csv");
  check.expect(svg_text.find("46.5%") != std::string::npos, "baseline missing from summary.svg");
  return check.outcome();
}

bool python_has_qiskit() {
  return std::system("python3 -c 'import qiskit' >/dev/null 2>&1") == 0;
}

Outcome live_path() {
  auto baseline = baseline_renders();
  if (baseline.kind == Outcome::fail) return baseline;

  const char* suite = std::getenv("QEVAL_LIVE_SUITE");
  const char* model = std::getenv("QEVAL_LIVE_MODEL");
  if (!suite || !python_has_qiskit()) {
    return {Outcome::skip,
            "set QEVAL_LIVE_SUITE to the task file and install qiskit to run it; baseline 46.5% renders"};
  }
  Checker check;
  cli::RunConfig cfg;
  cfg.suite_path = suite;
  cfg.agent.sandbox = testing::shim_config(600.0);
  cfg.concurrency = std::max(1u, std::thread::hardware_concurrency());
  std::ostringstream out, err;
  int code = cli::guarded([&] { return cli::cmd_selfcheck(cfg, out); }, err);
  auto tasks = load_tasks(cfg.suite_path);
  std::string want = std::to_string(tasks.size()) + "/" + std::to_string(tasks.size()) + " canonical pass\n";
  check.expect(code == 0 && out.str().ends_with(want), "selfcheck: " + out.str() + err.str());
  if (!model) {
    auto o = check.outcome();
    if (o.kind == Outcome::fail) return o;
    return {Outcome::skip, "selfcheck " + want.substr(0, want.size() - 1) + "; set QEVAL_LIVE_MODEL and provider credentials for the live run"};
  }
  cfg.agent.generator_model = model;
  cfg.output_path = g_repeat_workspace->dir / "live.jsonl";
  code = cli::guarded([&] { return cli::cmd_run(cfg, out); }, err);
  check.expect(code == cli::exit_ok || code == cli::exit_harness_errors, "live run exited " + std::to_string(code) + ": " + err.str());
  if (fs::exists(cfg.output_path)) {
    for (const auto& rec : read_results(cfg.output_path).records) {
      for (const auto& a : rec.attempts) check.expect(!a.model_version.empty(), rec.task_id + " has no model version");
    }
  }
  return check.outcome("selfcheck and live zero-shot run with " + std::string(model));
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
    double time_limit_s = 0.0;  // 0: none
  };
  Workspace repeat_ws;
  std::vector<Criterion> criteria{
      {1, "pass@k equals exhaustive subset enumeration for n <= 8", pass_at_k_oracle, 1.0},
      {2, "synthetic suite: zero-shot 5/12, agent(5) 8/12, <= 6 executions", synthetic_end_to_end, 30.0},
      {3, "agent spends exactly 1 + max_repairs executions, halts on first pass", agent_bound_and_halt},
      {4, "2 s timeout: verdict timeout, wall time in [2, 7] s, no orphans", timeout_enforcement},
      {5, "dense top-k equals brute-force scan (50 corpora, l2 and cosine, k <= 10)", dense_exactness},
      {6, "BM25 worked example 0.2877, tf monotonicity, absent terms score 0", bm25_oracle},
      {7, "fusion degenerates to either side at weight 0; 2:1 examples", fusion_degeneration},
      {8, "leakage filter removes copies, keeps disjoint chunks, is idempotent", leakage_filtering},
      {9, "no ground-truth substring (>= 20 chars) in any prompt message", ground_truth_isolation},
      {10, "repeats=5: spread 0, results identical modulo timing", [&] { return repeat_determinism(repeat_ws); }},
      {11, "live: selfcheck all canonical, real provider run; baseline 46.5% rendered", live_path},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = failed(std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.kind == Outcome::pass && c.time_limit_s > 0 && secs > c.time_limit_s) {
      o = failed("took longer than " + std::to_string(c.time_limit_s) + " s");
    }
    const char* label = o.kind == Outcome::pass ? "PASS" : o.kind == Outcome::fail ? "FAIL" : "SKIP";
    failures += o.kind == Outcome::fail ? 1 : 0;
    std::cout << label << " [" << std::setw(2) << c.id << "] " << c.name << " (" << std::fixed
              << std::setprecision(2) << secs << " s)";
    if (!o.detail.empty()) std::cout << ": " << o.detail;
    std::cout << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
