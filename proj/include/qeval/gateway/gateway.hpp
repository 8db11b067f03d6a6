#pragma once

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "qeval/gateway/provider.hpp"
#include "qeval/gateway/types.hpp"

namespace qeval::gateway {

struct RetryPolicy {
  int max_attempts = 4;
  double initial_backoff_seconds = 1.0;
  double multiplier = 2.0;
  double max_backoff_seconds = 30.0;
};

/// Append-only JSON-lines log of every provider call.
class CallLog {
 public:
  explicit CallLog(const std::filesystem::path& path);
  void append(const std::string& line);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// Counting limiter; callers beyond the cap block until a slot frees.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int max_concurrent);
  void acquire();
  void release();

 private:
  int capacity_;
  int in_use_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_concurrent_per_provider = 4;
  std::filesystem::path call_log;  // empty: no log
  std::function<void(double)> sleeper;  // backoff sleeps; defaults to this_thread::sleep_for
};

/// Provider-agnostic entry point. Model ids are "<provider>:<model>";
/// a bare "mock" routes to the provider registered as "mock".
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  void register_provider(std::shared_ptr<Provider> provider);
  bool has_provider(const std::string& name) const;

  /// Retries TransportError with exponential backoff; ParameterError and
  /// ConfigurationError propagate immediately.
  Generation generate(const GenerationRequest& request);

  /// "hash-<dim>" is computed locally; anything else goes to its provider in
  /// batches. Throws IntegrityError on ragged dimensions.
  std::vector<std::vector<float>> embed(std::span<const std::string> texts,
                                        const std::string& embedder_id);

  std::vector<double> score_pairs(const std::string& model_id, const std::string& query,
                                  std::span<const std::string> documents);

  /// Registers the HTTP providers whose credentials are present in the environment:
  /// OPENAI_API_KEY (+OPENAI_BASE_URL), ANTHROPIC_API_KEY (+ANTHROPIC_BASE_URL),
  /// GEMINI_API_KEY (+GEMINI_BASE_URL), TEI_BASE_URL (+TEI_API_KEY).
  void register_providers_from_env();

  static std::pair<std::string, std::string> split_model_id(const std::string& model_id);

 private:
  Provider& route(const std::string& provider_name);
  ConcurrencyLimiter& limiter(const std::string& provider_name);
  template <typename Fn>
  auto with_retry(const std::string& provider_name, const std::string& what, Fn&& fn);
  void log_call(const std::string& model_id, const std::string& provider, const RequestContext& ctx,
                const std::string& outcome, int attempts, double latency, long long tokens_in,
                long long tokens_out);

  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Provider>> providers_;
  std::map<std::string, std::unique_ptr<ConcurrencyLimiter>> limiters_;
  std::unique_ptr<CallLog> call_log_;
};

}  // namespace qeval::gateway
