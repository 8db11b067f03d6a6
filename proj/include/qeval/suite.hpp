#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/run_record.hpp"
#include "qeval/strategy.hpp"
#include "qeval/task.hpp"

namespace qeval {

/// First line of every results file.
struct ResultsHeader {
  std::string harness_version = QEVAL_VERSION;
  std::string config_hash;
  std::string suite_hash;
  std::string strategy;
  std::string model;
  int samples_per_task = 1;
  std::string started_at;  // ISO-8601 UTC; a timing field
};

nlohmann::json to_json(const ResultsHeader& header);
ResultsHeader results_header_from_json(const nlohmann::json& j);

struct ResultsFile {
  ResultsHeader header;
  std::vector<RunRecord> records;
};

class ResultsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a results file. A torn final line (crash mid-write) is ignored.
ResultsFile read_results(const std::filesystem::path& path);

struct SuiteRunOptions {
  Strategy strategy = Strategy::zero_shot;
  AgentConfig agent;
  std::size_t concurrency = 1;
  int samples_per_task = 1;
  std::string config_hash;
  std::filesystem::path output_path;
  /// Keep records already in output_path and run only the missing ones.
  bool resume = false;
  std::function<void(const RunRecord&)> on_record;
};

struct SuiteRunOutcome {
  std::vector<RunRecord> records;  // suite order, resumed ones included
  std::size_t resumed = 0;
  std::size_t harness_errors = 0;
};

/// Runs every task (x samples) on a pool of `concurrency` workers and streams
/// records to output_path in suite order, so the file is always a prefix of
/// the final result. Throws ResultsFormatError when resuming against a file
/// written for another config or suite.
SuiteRunOutcome run_suite(std::span<const BenchmarkTask> tasks, const SuiteRunOptions& options,
                          StrategyRunner& runner);

std::string utc_timestamp();

}  // namespace qeval
