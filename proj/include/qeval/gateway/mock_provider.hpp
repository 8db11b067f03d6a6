#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/gateway/provider.hpp"

namespace qeval::gateway {

/// One scripted response. Every condition that is set must hold.
struct MockRule {
  std::optional<std::string> model;
  std::optional<std::string> task_id;
  std::optional<int> attempt;
  std::optional<std::string> feedback_contains;  // searched in the last message
  std::optional<std::string> prompt_contains;    // searched in the first user message
  std::string completion;
  bool transport_failure = false;  // raise TransportError instead of answering
};

struct MockScript {
  std::string version = "1";
  std::vector<std::string> reject_parameters;  // e.g. reasoning_effort, verbosity
  int transient_failures = 0;                  // first N calls fail with TransportError
  std::string default_completion;
  std::vector<MockRule> rules;
};

MockScript mock_script_from_json(const nlohmann::json& j);
MockScript load_mock_script(const std::filesystem::path& path);
nlohmann::json to_json(const MockScript& script);

/// Deterministic scripted provider. First matching rule wins.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(MockScript script);

  std::string name() const override { return "mock"; }
  ProviderReply complete(const std::string& model, const GenerationRequest& request) override;
  std::vector<std::vector<float>> embed(const std::string& model,
                                        std::span<const std::string> texts) override;

  /// Every request received, in arrival order.
  std::vector<GenerationRequest> requests() const;
  std::size_t call_count() const;

 private:
  MockScript script_;
  mutable std::mutex mutex_;
  std::vector<GenerationRequest> requests_;
  int failures_served_ = 0;
};

}  // namespace qeval::gateway
