#include "qeval/gateway/embedder.hpp"

#include <charconv>

#include "qeval/gateway/gateway.hpp"
#include "qeval/hash.hpp"
#include "qeval/text.hpp"

namespace qeval::gateway {

FeatureHashEmbedder::FeatureHashEmbedder(std::size_t dimension)
    : dimension_(dimension), id_("hash-" + std::to_string(dimension)) {
  if (dimension == 0) throw std::invalid_argument("feature hash dimension must be positive");
}

std::vector<float> FeatureHashEmbedder::embed_one(const std::string& text) const {
  std::vector<float> v(dimension_, 0.0f);
  for (const auto& token : tokenize_terms(text)) v[fnv1a64(token) % dimension_] += 1.0f;
  return v;
}

std::vector<std::vector<float>> FeatureHashEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::size_t feature_hash_dimension(const std::string& id) {
  if (!id.starts_with("hash-")) return 0;
  std::size_t dim = 0;
  auto digits = std::string_view(id).substr(5);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dim);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return 0;
  return dim;
}

GatewayEmbedder::GatewayEmbedder(Gateway& gateway, std::string embedder_id)
    : gateway_(&gateway), id_(std::move(embedder_id)) {}

std::vector<std::vector<float>> GatewayEmbedder::embed(std::span<const std::string> texts) const {
  return gateway_->embed(texts, id_);
}

}  // namespace qeval::gateway
