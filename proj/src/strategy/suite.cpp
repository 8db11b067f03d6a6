#include "qeval/suite.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "qeval/jsonl.hpp"

namespace qeval {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const ResultsHeader& h) {
  return json{{"kind", "header"},
              {"harness_version", h.harness_version},
              {"config_hash", h.config_hash},
              {"suite_hash", h.suite_hash},
              {"strategy", h.strategy},
              {"model", h.model},
              {"samples_per_task", h.samples_per_task},
              {"started_at", h.started_at}};
}

ResultsHeader results_header_from_json(const json& j) {
  if (j.value("kind", "") != "header") throw ResultsFormatError("results file does not start with a header");
  ResultsHeader h;
  try {
    h.harness_version = j.at("harness_version").get<std::string>();
    h.config_hash = j.at("config_hash").get<std::string>();
    h.suite_hash = j.at("suite_hash").get<std::string>();
    h.strategy = j.at("strategy").get<std::string>();
    h.model = j.at("model").get<std::string>();
    h.samples_per_task = j.value("samples_per_task", 1);
    h.started_at = j.value("started_at", "");
  } catch (const json::exception& e) {
    throw ResultsFormatError(std::string("malformed results header: ") + e.what());
  }
  return h;
}

namespace {

// Parses the file's lines; returns them plus whether a torn last line was dropped.
std::vector<json> read_lines_tolerant(const fs::path& path, bool& torn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResultsFormatError("cannot read results file " + path.string());
  std::vector<std::string> raw;
  std::string line;
  while (std::getline(in, line)) raw.push_back(line);
  torn = false;
  std::vector<json> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(raw[i]));
    } catch (const json::parse_error& e) {
      if (i + 1 == raw.size()) {
        torn = true;
        break;
      }
      throw ResultsFormatError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ResultsFile read_results(const fs::path& path) {
  bool torn = false;
  auto lines = read_lines_tolerant(path, torn);
  if (lines.empty()) throw ResultsFormatError("empty results file " + path.string());
  ResultsFile file;
  file.header = results_header_from_json(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    try {
      file.records.push_back(run_record_from_json(lines[i]));
    } catch (const std::exception& e) {
      throw ResultsFormatError(path.string() + ": record " + std::to_string(i) + ": " + e.what());
    }
  }
  return file;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SuiteRunOutcome run_suite(std::span<const BenchmarkTask> tasks, const SuiteRunOptions& options,
                          StrategyRunner& runner) {
  options.agent.validate();
  if (options.concurrency < 1) throw std::invalid_argument("concurrency: must be at least 1");
  if (options.samples_per_task < 1) throw std::invalid_argument("samples_per_task: must be at least 1");

  ResultsHeader header;
  header.config_hash = options.config_hash;
  header.suite_hash = suite_hash(tasks);
  header.strategy = strategy_label(options.strategy, options.agent);
  header.model = model_label(options.strategy, options.agent);
  header.samples_per_task = options.samples_per_task;
  header.started_at = utc_timestamp();

  // One job per (task, sample), in suite order.
  struct Job {
    const BenchmarkTask* task;
    int sample;
  };
  std::vector<Job> jobs;
  for (const auto& t : tasks) {
    for (int s = 0; s < options.samples_per_task; ++s) jobs.push_back({&t, s});
  }

  SuiteRunOutcome outcome;
  std::vector<std::optional<RunRecord>> slots(jobs.size());
  std::size_t done_prefix = 0;

  bool resuming = options.resume && !options.output_path.empty() && fs::exists(options.output_path) &&
                  fs::file_size(options.output_path) > 0;
  if (resuming) {
    auto existing = read_results(options.output_path);
    if (existing.header.config_hash != header.config_hash || existing.header.suite_hash != header.suite_hash) {
      throw ResultsFormatError("cannot resume " + options.output_path.string() +
                               ": it was written for a different config or suite");
    }
    header = existing.header;
    // Records were written in suite order, so they cover a prefix of the jobs.
    for (auto& r : existing.records) {
      if (done_prefix >= jobs.size() || jobs[done_prefix].task->task_id != r.task_id ||
          jobs[done_prefix].sample != r.sample_index) {
        throw ResultsFormatError("cannot resume " + options.output_path.string() +
                                 ": records are not a prefix of the suite");
      }
      slots[done_prefix++] = std::move(r);
    }
    outcome.resumed = done_prefix;
  }

  std::ofstream out;
  if (!options.output_path.empty()) {
    if (options.output_path.has_parent_path()) fs::create_directories(options.output_path.parent_path());
    // Rewriting the kept lines also drops a torn tail left by a crash.
    out.open(options.output_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write results file " + options.output_path.string());
    out << dump_compact(to_json(header)) << '\n';
    for (std::size_t i = 0; i < done_prefix; ++i) out << dump_compact(to_json(*slots[i])) << '\n';
    out.flush();
  }

  std::mutex mutex;
  std::size_t written = done_prefix;
  std::atomic<std::size_t> next{done_prefix};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;

  auto flush_ready = [&] {
    while (written < slots.size() && slots[written]) {
      if (out.is_open()) {
        out << dump_compact(to_json(*slots[written])) << '\n';
        out.flush();
      }
      if (options.on_record) options.on_record(*slots[written]);
      ++written;
    }
  };

  auto worker = [&] {
    while (!abort) {
      std::size_t i = next++;
      if (i >= jobs.size()) return;
      try {
        RunRecord r = runner.run(options.strategy, *jobs[i].task, options.agent, jobs[i].sample);
        std::lock_guard lock(mutex);
        slots[i] = std::move(r);
        flush_ready();
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  std::size_t n_workers = std::min(options.concurrency, jobs.size() - std::min(jobs.size(), done_prefix));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  if (n_workers > 0) worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (auto& slot : slots) {
    if (slot->final_status == ExecStatus::harness_error) ++outcome.harness_errors;
    outcome.records.push_back(std::move(*slot));
  }
  return outcome;
}

}  // namespace qeval
