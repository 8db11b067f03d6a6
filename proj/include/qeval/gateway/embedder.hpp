#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qeval::gateway {

class Gateway;

/// Maps texts to fixed-dimension vectors. Implementations are immutable.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual const std::string& id() const = 0;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) const = 0;
};

/// Hermetic stand-in: bag-of-tokens counts hashed (FNV-1a) into `dimension` buckets.
/// Word order is invisible to it, so "quantum circuit" == "circuit quantum".
class FeatureHashEmbedder final : public Embedder {
 public:
  explicit FeatureHashEmbedder(std::size_t dimension = 256);

  const std::string& id() const override { return id_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;
  std::vector<float> embed_one(const std::string& text) const;

 private:
  std::size_t dimension_;
  std::string id_;
};

/// Parses "hash-<dim>"; returns 0 if `id` is not a feature-hash id.
std::size_t feature_hash_dimension(const std::string& id);

/// Routes to Gateway::embed under a fixed embedder id.
class GatewayEmbedder final : public Embedder {
 public:
  GatewayEmbedder(Gateway& gateway, std::string embedder_id);

  const std::string& id() const override { return id_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  Gateway* gateway_;
  std::string id_;
};

}  // namespace qeval::gateway
