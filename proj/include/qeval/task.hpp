#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qeval {

enum class Tier { basic, intermediate, advanced };

inline constexpr Tier kAllTiers[] = {Tier::basic, Tier::intermediate, Tier::advanced};

std::string_view to_string(Tier tier);
std::optional<Tier> parse_tier(std::string_view text);

/// One HumanEval-format task. Immutable after load.
struct BenchmarkTask {
  std::string task_id;
  std::string prompt;
  std::string canonical_solution;
  std::string test;
  std::string entry_point;
  Tier difficulty = Tier::basic;

  bool operator==(const BenchmarkTask&) const = default;
};

class TaskFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses line-delimited records (canonical) or a single JSON array.
/// Throws TaskFormatError naming the record index and offending field.
std::vector<BenchmarkTask> parse_tasks(std::string_view content);
std::vector<BenchmarkTask> load_tasks(const std::filesystem::path& path);

/// Writes the canonical line-delimited form (difficulty under `difficulty_scale`).
void save_tasks(const std::filesystem::path& path, std::span<const BenchmarkTask> tasks);

nlohmann::json to_json(const BenchmarkTask& task);

/// SHA-256 over the canonical serialization of the suite, in suite order.
std::string suite_hash(std::span<const BenchmarkTask> tasks);

bool is_identifier(std::string_view text);

}  // namespace qeval
