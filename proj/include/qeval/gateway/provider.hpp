#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qeval/gateway/types.hpp"

namespace qeval::gateway {

struct ProviderReply {
  std::string text;
  std::string model_version;
  std::optional<long long> tokens_in;  // unset when the provider does not report usage
  std::optional<long long> tokens_out;
};

/// One backend. `model` is the id with the "<provider>:" prefix removed.
/// Implementations must be safe for concurrent calls.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string name() const = 0;
  virtual ProviderReply complete(const std::string& model, const GenerationRequest& request) = 0;

  virtual std::vector<std::vector<float>> embed(const std::string& model,
                                                std::span<const std::string> texts);
  /// Pairwise relevance (cross-encoder) scores, one per document.
  virtual std::vector<double> score_pairs(const std::string& model, const std::string& query,
                                          std::span<const std::string> documents);
};

}  // namespace qeval::gateway
