#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qeval::gateway {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const Message&) const = default;
};

enum class ReasoningEffort { minimal, low, medium, high };
enum class Verbosity { low, medium, high };

std::string_view to_string(ReasoningEffort effort);
std::string_view to_string(Verbosity verbosity);
std::optional<ReasoningEffort> parse_reasoning_effort(std::string_view text);
std::optional<Verbosity> parse_verbosity(std::string_view text);

/// Bookkeeping attached to a request. Never sent to remote providers; the
/// mock provider keys its scripts on it.
struct RequestContext {
  std::string task_id;
  int attempt = 0;
};

struct GenerationRequest {
  std::string model_id;  // "<provider>:<model>", or "mock"
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<int> max_output_tokens;  // unset: provider maximum
  std::optional<ReasoningEffort> reasoning_effort;
  std::optional<Verbosity> verbosity;
  RequestContext context;
};

struct Generation {
  std::string text;
  std::string model_version_reported;
  double latency = 0.0;
  long long tokens_in = 0;
  long long tokens_out = 0;
  std::string provider;
};

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Retryable: connection failures, rate limiting, provider 5xx.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// The provider rejected a request parameter. Never retried.
class ParameterError : public GatewayError {
 public:
  ParameterError(std::string parameter, const std::string& detail)
      : GatewayError("parameter '" + parameter + "' rejected: " + detail),
        parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// Provider returned something structurally wrong (e.g. ragged embeddings).
class IntegrityError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Non-retryable provider refusal: credentials, unknown model, unknown provider.
class ConfigurationError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

}  // namespace qeval::gateway
