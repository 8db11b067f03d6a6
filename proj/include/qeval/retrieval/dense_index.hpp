#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/gateway/embedder.hpp"
#include "qeval/retrieval/chunk.hpp"

namespace qeval::retrieval {

enum class Metric { l2, cosine };

std::string_view to_string(Metric metric);
std::optional<Metric> parse_metric(std::string_view text);

struct EmbeddedQuery {
  std::string embedder_id;
  std::vector<float> vector;
};

/// Exact (brute-force) vector index. Immutable once built.
///
/// Cosine scores are similarities; L2 scores are negated Euclidean distances,
/// so larger is better under both metrics.
class DenseIndex {
 public:
  DenseIndex() = default;

  static DenseIndex build(std::vector<ChunkPtr> chunks, const gateway::Embedder& embedder);
  static DenseIndex from_vectors(std::string embedder_id, std::vector<ChunkPtr> chunks,
                                 const std::vector<std::vector<float>>& vectors);
  static DenseIndex concat(std::span<const DenseIndex* const> parts);

  std::vector<ScoredChunk> query(const EmbeddedQuery& q, std::size_t k, Metric metric) const;

  /// Score of one stored chunk against `q`; nullopt for unknown ids.
  std::optional<double> score_of(const EmbeddedQuery& q, const std::string& chunk_id,
                                 Metric metric) const;

  /// Writes manifest.json + vectors.f32 (little-endian float32, row-major) into `dir`.
  void save(const std::filesystem::path& dir, const nlohmann::json& manifest_extra) const;
  /// `chunks` must be the chunk store the index was built from, in the same order.
  static DenseIndex load(const std::filesystem::path& dir, std::vector<ChunkPtr> chunks);

  std::size_t size() const noexcept { return chunks_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  const std::vector<ChunkPtr>& chunks() const noexcept { return chunks_; }

 private:
  void check_query(const EmbeddedQuery& q) const;
  double score_row(std::span<const float> q, double q_norm, std::size_t row, Metric metric) const;

  std::string embedder_id_;
  std::size_t dimension_ = 0;
  std::vector<ChunkPtr> chunks_;
  std::vector<float> data_;    // row-major, size() x dimension()
  std::vector<double> norms_;  // L2 norm per row
  std::unordered_map<std::string, std::size_t> row_of_;
};

/// Directory name for an embedder's dense index: distinct per embedder id.
std::string dense_index_dirname(std::string_view embedder_id);

}  // namespace qeval::retrieval
