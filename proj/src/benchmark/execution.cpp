#include "qeval/execution.hpp"

#include <nlohmann/json.hpp>

namespace qeval {

using nlohmann::json;

std::string_view to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::pass: return "pass";
    case ExecStatus::fail: return "fail";
    case ExecStatus::error: return "error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::harness_error: return "harness_error";
  }
  return "harness_error";
}

std::optional<ExecStatus> parse_exec_status(std::string_view text) {
  for (auto s : {ExecStatus::pass, ExecStatus::fail, ExecStatus::error, ExecStatus::timeout,
                 ExecStatus::harness_error}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

json to_json(const ExecutionResult& r) {
  json j;
  j["status"] = std::string(to_string(r.status));
  j["error_class"] = r.error_class ? json(*r.error_class) : json(nullptr);
  j["message"] = r.message;
  j["feedback"] = r.feedback;
  j["diagnostic"] = r.diagnostic;
  j["wall_time"] = r.wall_time;
  j["shim_duration_ms"] = r.shim_duration_ms ? json(*r.shim_duration_ms) : json(nullptr);
  j["stdout_tail"] = r.stdout_tail;
  j["stderr_tail"] = r.stderr_tail;
  return j;
}

ExecutionResult execution_result_from_json(const json& j) {
  ExecutionResult r;
  auto status = parse_exec_status(j.at("status").get<std::string>());
  if (!status) throw std::runtime_error("unknown execution status");
  r.status = *status;
  if (auto it = j.find("error_class"); it != j.end() && it->is_string()) {
    r.error_class = it->get<std::string>();
  }
  r.message = j.value("message", "");
  r.feedback = j.value("feedback", "");
  r.diagnostic = j.value("diagnostic", "");
  r.wall_time = j.value("wall_time", 0.0);
  if (auto it = j.find("shim_duration_ms"); it != j.end() && it->is_number()) {
    r.shim_duration_ms = it->get<long long>();
  }
  r.stdout_tail = j.value("stdout_tail", "");
  r.stderr_tail = j.value("stderr_tail", "");
  return r;
}

}  // namespace qeval
