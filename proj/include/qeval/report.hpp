#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qeval/suite.hpp"
#include "qeval/task.hpp"

namespace qeval::report {

enum class Format { csv, markdown, svg };

std::optional<Format> parse_format(std::string_view text);

struct Baseline {
  std::string label;
  double pass_rate = 0.0;  // fraction in [0, 1]
};

struct ReportSpec {
  std::vector<std::filesystem::path> inputs;
  std::optional<Baseline> baseline;
  std::set<Format> formats{Format::csv, Format::markdown, Format::svg};
  std::filesystem::path output_dir = ".";

  void validate() const;
};

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Half-even rounding of a fraction to a one-decimal percentage: 70/151 -> "46.4".
std::string format_percent(double fraction);
/// Half-even rounding to whole seconds.
std::string format_seconds(double seconds);

/// One (model, strategy) row. Results files sharing a (model, strategy) are
/// treated as repeats: rates and times are averaged over them.
struct SummaryRow {
  std::string model;
  std::string strategy;
  double pass_rate = 0.0;
  std::optional<double> total_time_s;  // absent for a baseline constant
  std::map<Tier, double> tier_pass_rate;
  int tasks = 0;
  int harness_errors = 0;
  bool baseline = false;
};

struct LoadedRun {
  std::filesystem::path path;
  ResultsFile file;
};

/// Loads every input; throws ReportError if the runs cover different task sets.
std::vector<LoadedRun> load_runs(std::span<const std::filesystem::path> inputs);

std::vector<SummaryRow> summary_rows(std::span<const LoadedRun> runs,
                                     const std::optional<Baseline>& baseline);

std::string summary_csv(std::span<const SummaryRow> rows);
std::string summary_markdown(std::span<const SummaryRow> rows);
/// Grouped bars per model: accuracy panel on top, serialized time below.
std::string summary_svg(std::span<const SummaryRow> rows);

/// Writes summary.{csv,md,svg} for the requested formats; returns the paths.
std::vector<std::filesystem::path> render_summary(const ReportSpec& spec);

/// Tiers present in the runs (basic, intermediate, advanced order).
std::vector<Tier> present_tiers(std::span<const LoadedRun> runs);
std::string tier_markdown(std::span<const SummaryRow> rows, std::span<const Tier> tiers);
std::string tier_csv(std::span<const SummaryRow> rows, std::span<const Tier> tiers);
std::string tier_svg(std::span<const SummaryRow> rows, std::span<const Tier> tiers);

/// Writes tiers.{csv,md,svg}. Tiers with no tasks are left out and footnoted.
std::vector<std::filesystem::path> render_tier_breakdown(const ReportSpec& spec);

struct ConsistencyReport {
  std::vector<std::string> runs;
  std::vector<double> pass_rates;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double spread = 0.0;  // max - min
  std::vector<std::string> disagreements;  // task_ids whose outcome differs between runs
};

/// Needs at least two runs of the same config (same config hash).
ConsistencyReport consistency_check(std::span<const std::filesystem::path> run_files);
std::string consistency_markdown(const ConsistencyReport& report);

}  // namespace qeval::report
