#pragma once

#include <string>

#include "qeval/gateway/provider.hpp"

namespace qeval::gateway {

struct HttpEndpoint {
  std::string base_url;     // scheme://host[:port]
  std::string path_prefix;  // e.g. "/v1"
  std::string api_key;
  double timeout_seconds = 600.0;
};

/// Chat-completions + embeddings wire format (OpenAI, and Gemini's
/// OpenAI-compatible endpoint).
class OpenAICompatibleProvider final : public Provider {
 public:
  OpenAICompatibleProvider(std::string name, HttpEndpoint endpoint);

  std::string name() const override { return name_; }
  ProviderReply complete(const std::string& model, const GenerationRequest& request) override;
  std::vector<std::vector<float>> embed(const std::string& model,
                                        std::span<const std::string> texts) override;

 private:
  std::string name_;
  HttpEndpoint endpoint_;
};

/// Messages API. Rejects reasoning_effort/verbosity, which it has no equivalent for.
class AnthropicProvider final : public Provider {
 public:
  explicit AnthropicProvider(HttpEndpoint endpoint, int default_max_tokens = 8192);

  std::string name() const override { return "anthropic"; }
  ProviderReply complete(const std::string& model, const GenerationRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  int default_max_tokens_;
};

/// text-embeddings-inference style server: POST /rerank and POST /embed.
class RerankServerProvider final : public Provider {
 public:
  explicit RerankServerProvider(HttpEndpoint endpoint);

  std::string name() const override { return "tei"; }
  ProviderReply complete(const std::string& model, const GenerationRequest& request) override;
  std::vector<std::vector<float>> embed(const std::string& model,
                                        std::span<const std::string> texts) override;
  std::vector<double> score_pairs(const std::string& model, const std::string& query,
                                  std::span<const std::string> documents) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace qeval::gateway
