#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace qeval {

enum class ExecStatus { pass, fail, error, timeout, harness_error };

std::string_view to_string(ExecStatus status);
std::optional<ExecStatus> parse_exec_status(std::string_view text);

/// Outcome of one sandboxed run.
///
/// `diagnostic` is the untruncated text feedback is cut from: the shim's
/// traceback tail, or a fixed message for timeouts and harness faults.
/// `feedback` is `diagnostic` tail-truncated to the sandbox feedback limit.
struct ExecutionResult {
  ExecStatus status = ExecStatus::harness_error;
  std::optional<std::string> error_class;
  std::string message;
  std::string diagnostic;
  std::string feedback;
  double wall_time = 0.0;
  std::optional<long long> shim_duration_ms;
  std::string stdout_tail;  // output printed before the verdict line
  std::string stderr_tail;
};

nlohmann::json to_json(const ExecutionResult& result);
ExecutionResult execution_result_from_json(const nlohmann::json& j);

}  // namespace qeval
