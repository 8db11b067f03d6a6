#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/execution.hpp"
#include "qeval/task.hpp"

namespace qeval {

/// One generate-then-execute step of a task run.
struct Attempt {
  int attempt_index = 0;
  std::string model_id;
  std::string model_version;
  std::string prompt_hash;
  std::string completion;
  ExecutionResult result;
  double generation_latency = 0.0;
  long long tokens_in = 0;
  long long tokens_out = 0;
};

/// Per-task evaluation outcome with the full attempt trace.
struct RunRecord {
  std::string task_id;
  Tier difficulty = Tier::basic;
  std::string strategy;
  std::string model;
  int sample_index = 0;
  std::vector<Attempt> attempts;
  ExecStatus final_status = ExecStatus::harness_error;
  int executions_count = 0;
  double wall_time_total = 0.0;
  long long tokens_total = 0;
  std::optional<std::vector<std::string>> retrieval_chunk_ids;
  bool retrieval_context_empty = false;
  std::vector<std::string> retrieval_degraded_stages;
  std::string harness_note;

  bool passed() const { return final_status == ExecStatus::pass; }
};

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Keys holding wall-clock measurements; stripped when comparing repeats.
inline constexpr const char* kTimingKeys[] = {"wall_time", "wall_time_total", "generation_latency",
                                              "shim_duration_ms", "started_at"};

/// Copy of `j` with every timing key removed at any depth.
nlohmann::json strip_timing(const nlohmann::json& j);

}  // namespace qeval
