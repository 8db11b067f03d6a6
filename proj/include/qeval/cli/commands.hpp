#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qeval/cli/config.hpp"
#include "qeval/report.hpp"

namespace qeval::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_harness_errors = 1,  // evaluation completed, some records are harness_error
  exit_config = 2,
  exit_infrastructure = 3,
};

/// Command-line values that replace the config file's.
struct RunOverrides {
  std::optional<std::filesystem::path> suite_path;
  std::optional<std::filesystem::path> output_path;
  std::optional<std::string> strategy;
  std::optional<int> max_repairs;
  std::optional<std::string> model;
  std::optional<std::string> repair_model;
  std::optional<int> repeats;
  std::optional<std::size_t> concurrency;
  bool resume = false;
};

/// Applies the overrides and re-validates.
void apply_overrides(RunConfig& cfg, const RunOverrides& overrides);

/// Corpus chunking: writes <index_dir>/<corpus>/chunks.jsonl for every configured corpus.
int cmd_ingest(const RunConfig& cfg, std::ostream& out);

/// Builds dense and BM25 indexes from the chunk stores written by ingest.
int cmd_index(const RunConfig& cfg, std::ostream& out);

/// Runs the suite `repeats` times. Exit 1 when any record is a harness_error.
int cmd_run(const RunConfig& cfg, std::ostream& out);

struct AblationOptions {
  std::vector<int> depths{4, 10, 20, 30};
  std::filesystem::path csv_path = "ablation.csv";
  /// Per-cell results files go here; empty keeps them in memory only.
  std::filesystem::path runs_dir;
};

struct AblationCell {
  std::string corpora;  // "docs" or "docs+code"
  std::string cascade;
  retrieval::RetrievalPipelineConfig retrieval;
};

/// The four cascades swept by ablate-retrieval, over each corpus set, at depth 4.
std::vector<AblationCell> ablation_grid();

int cmd_ablate_retrieval(const RunConfig& cfg, const AblationOptions& options, std::ostream& out);

struct ReportOptions {
  report::ReportSpec spec;
  bool tiers = false;
  bool consistency = false;
};

int cmd_report(const ReportOptions& options, std::ostream& out);

/// Executes every canonical solution; exit 0 only when all pass.
int cmd_selfcheck(const RunConfig& cfg, std::ostream& out);

/// Runs `fn`, printing exceptions to `err` and mapping them to exit codes.
int guarded(const std::function<int()>& fn, std::ostream& err);

}  // namespace qeval::cli
