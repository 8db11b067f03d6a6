#pragma once

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/execution.hpp"
#include "qeval/task.hpp"

namespace qeval {

struct SandboxConfig {
  double timeout_seconds = 600.0;
  std::size_t feedback_limit = 4000;
  /// Interpreter plus runner shim, e.g. {"python3", "/opt/qeval/runner_shim.py"}.
  /// The payload file path is appended as the final argument.
  std::vector<std::string> interpreter_command;
  /// Parent of the per-call temporary directories; empty means the system temp dir.
  std::filesystem::path workdir;
  std::vector<std::string> env_allowlist{"PATH", "LANG", "LC_ALL", "PYTHONPATH", "HOME",
                                         "VIRTUAL_ENV"};

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;
};

/// What the runner shim receives: prompt + candidate is executed, then test,
/// then check(entry_point).
struct Payload {
  std::string prompt;
  std::string candidate;
  std::string test;
  std::string entry_point;
};

nlohmann::json to_json(const Payload& payload);

/// Removes markdown code fences, keeping the block that defines `entry_point`
/// (or the first block). Text without fences is returned as is.
std::string strip_code_fences(std::string_view text, std::string_view entry_point);

/// True when `source` contains a top-level-or-nested `def entry_point(`.
bool defines_function(std::string_view source, std::string_view entry_point);

/// Drops the `def entry_point(...)` stub and its indented body from `prompt`.
std::string remove_function_stub(std::string_view prompt, std::string_view entry_point);

/// Normalizes a model completion into a runnable payload.
///
/// Fences are stripped first. A candidate that defines the entry point
/// replaces the prompt's stub; anything else is treated as the body that
/// continues the prompt (unindented bodies get a four-space indent).
Payload assemble_payload(const BenchmarkTask& task, std::string_view candidate);

/// Runs the payload in one interpreter subprocess (own process group,
/// scrubbed environment, private temp directory) and classifies the verdict.
/// Never throws for execution failures; infrastructure faults come back as
/// ExecStatus::harness_error.
ExecutionResult execute_with_timeout(const Payload& payload, const SandboxConfig& cfg);

/// Tail of the diagnostic, at most `limit` characters, cut at a line boundary.
/// Throws std::logic_error for a passing result.
std::string extract_feedback(const ExecutionResult& result, std::size_t limit);

std::string timeout_message(double timeout_seconds);

/// Caps the number of concurrently running sandboxes.
class SandboxPool {
 public:
  explicit SandboxPool(std::size_t max_concurrent);

  ExecutionResult execute(const Payload& payload, const SandboxConfig& cfg);
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t in_use_ = 0;
  std::mutex mutex_;
  std::condition_variable released_;
};

}  // namespace qeval
