#include "qeval/gateway/mock_provider.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "qeval/gateway/embedder.hpp"

namespace qeval::gateway {

using nlohmann::json;

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

MockScript mock_script_from_json(const json& j) {
  MockScript s;
  s.version = j.value("version", std::string("1"));
  s.reject_parameters = j.value("reject_parameters", std::vector<std::string>{});
  s.transient_failures = j.value("transient_failures", 0);
  s.default_completion = j.value("default_completion", std::string());
  for (const auto& r : j.value("rules", json::array())) {
    MockRule rule;
    rule.model = optional_field<std::string>(r, "model");
    rule.task_id = optional_field<std::string>(r, "task_id");
    rule.attempt = optional_field<int>(r, "attempt");
    rule.feedback_contains = optional_field<std::string>(r, "feedback_contains");
    rule.prompt_contains = optional_field<std::string>(r, "prompt_contains");
    rule.completion = r.value("completion", std::string());
    rule.transport_failure = r.value("transport_failure", false);
    s.rules.push_back(std::move(rule));
  }
  return s;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read mock script " + path.string());
  try {
    return mock_script_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigurationError("malformed mock script " + path.string() + ": " + e.what());
  }
}

json to_json(const MockScript& s) {
  json rules = json::array();
  for (const auto& r : s.rules) {
    json jr;
    if (r.model) jr["model"] = *r.model;
    if (r.task_id) jr["task_id"] = *r.task_id;
    if (r.attempt) jr["attempt"] = *r.attempt;
    if (r.feedback_contains) jr["feedback_contains"] = *r.feedback_contains;
    if (r.prompt_contains) jr["prompt_contains"] = *r.prompt_contains;
    jr["completion"] = r.completion;
    if (r.transport_failure) jr["transport_failure"] = true;
    rules.push_back(std::move(jr));
  }
  return {{"version", s.version},
          {"reject_parameters", s.reject_parameters},
          {"transient_failures", s.transient_failures},
          {"default_completion", s.default_completion},
          {"rules", std::move(rules)}};
}

MockProvider::MockProvider(MockScript script) : script_(std::move(script)) {}

ProviderReply MockProvider::complete(const std::string& model, const GenerationRequest& request) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (failures_served_ < script_.transient_failures) {
      ++failures_served_;
      throw TransportError("mock: scripted transient failure");
    }
  }
  for (const auto& name : script_.reject_parameters) {
    if ((name == "reasoning_effort" && request.reasoning_effort) ||
        (name == "verbosity" && request.verbosity) ||
        (name == "max_output_tokens" && request.max_output_tokens) ||
        (name == "temperature" && request.temperature != 0.0)) {
      throw ParameterError(name, "not supported by mock model '" + model + "'");
    }
  }

  const std::string& last = request.messages.empty() ? std::string() : request.messages.back().content;
  std::string first_user;
  for (const auto& m : request.messages) {
    if (m.role == "user") {
      first_user = m.content;
      break;
    }
  }

  const std::string* completion = &script_.default_completion;
  for (const auto& rule : script_.rules) {
    if (rule.model && *rule.model != model) continue;
    if (rule.task_id && *rule.task_id != request.context.task_id) continue;
    if (rule.attempt && *rule.attempt != request.context.attempt) continue;
    if (rule.feedback_contains && last.find(*rule.feedback_contains) == std::string::npos) continue;
    if (rule.prompt_contains && first_user.find(*rule.prompt_contains) == std::string::npos) continue;
    if (rule.transport_failure) throw TransportError("mock: scripted transport failure");
    completion = &rule.completion;
    break;
  }
  ProviderReply reply;
  reply.text = *completion;
  reply.model_version = "mock/" + model + "@" + script_.version;
  return reply;
}

std::vector<std::vector<float>> MockProvider::embed(const std::string&,
                                                    std::span<const std::string> texts) {
  return FeatureHashEmbedder(256).embed(texts);
}

std::vector<GenerationRequest> MockProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t MockProvider::call_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

}  // namespace qeval::gateway
