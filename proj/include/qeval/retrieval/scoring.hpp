#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qeval/retrieval/bm25_index.hpp"
#include "qeval/retrieval/chunk.hpp"
#include "qeval/retrieval/dense_index.hpp"

namespace qeval::gateway {
class Gateway;
}

namespace qeval::retrieval {

/// Rescales a score list to [0, 1]: (s - lo) / (hi - lo) with lo = min(0, min s)
/// and hi = max s. Non-negative lists are therefore divided by their maximum;
/// lists with negative scores get full min-max. Constant lists map to 1.0.
std::vector<double> normalize_scores(std::span<const double> scores);

/// Weighted sum of normalized dense and sparse scores over the union of both
/// lists (a side that misses a chunk contributes 0). Returns the top k.
/// Throws std::invalid_argument for negative or all-zero weights.
std::vector<ScoredChunk> fuse_scores(const std::vector<ScoredChunk>& dense,
                                     const std::vector<ScoredChunk>& sparse, double w_dense,
                                     double w_sparse, std::size_t k);

/// A scoring failure inside one cascade stage.
class StageError : public RetrievalError {
 public:
  StageError(std::string stage, const std::string& what)
      : RetrievalError(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Scores query/candidate pairs for reranking.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual std::vector<double> score(std::string_view query,
                                    std::span<const ScoredChunk> candidates) const = 0;
};

/// Deterministic cross-encoder stand-in: number of distinct query terms present in the chunk.
class LexicalOverlapScorer final : public PairScorer {
 public:
  std::vector<double> score(std::string_view query,
                            std::span<const ScoredChunk> candidates) const override;
};

/// Remote pairwise model reached through the gateway (e.g. "tei:bge-reranker-base").
class GatewayCrossScorer final : public PairScorer {
 public:
  GatewayCrossScorer(gateway::Gateway& gateway, std::string model_id);
  std::vector<double> score(std::string_view query,
                            std::span<const ScoredChunk> candidates) const override;

 private:
  gateway::Gateway* gateway_;
  std::string model_id_;
};

/// Scores candidates by their stored vectors against a query vector.
class VectorScorer final : public PairScorer {
 public:
  VectorScorer(const DenseIndex& index, EmbeddedQuery query, Metric metric);
  std::vector<double> score(std::string_view query,
                            std::span<const ScoredChunk> candidates) const override;

 private:
  const DenseIndex* index_;
  EmbeddedQuery query_;
  Metric metric_;
};

class Bm25Scorer final : public PairScorer {
 public:
  explicit Bm25Scorer(const Bm25Index& index) : index_(&index) {}
  std::vector<double> score(std::string_view query,
                            std::span<const ScoredChunk> candidates) const override;

 private:
  const Bm25Index* index_;
};

/// Re-sorts candidates by the scorer; membership never changes. A single
/// candidate is returned untouched. Scorer exceptions become StageError(stage).
std::vector<ScoredChunk> rerank(std::string_view query, std::vector<ScoredChunk> candidates,
                                const PairScorer& scorer, const std::string& stage);

/// Jaccard similarity of the n-token shingle sets of two texts (code_tokens()).
/// A text shorter than n tokens yields a single shingle of all its tokens.
double shingle_jaccard(std::string_view a, std::string_view b, std::size_t n = 8);

/// Drops chunks whose shingle Jaccard with any reference solution reaches the
/// threshold. Survivors keep their order.
class LeakageFilter {
 public:
  LeakageFilter(std::span<const std::string> solutions, double threshold = 0.6);

  bool leaks(std::string_view text) const;
  std::vector<ScoredChunk> apply(std::vector<ScoredChunk> chunks) const;

 private:
  double threshold_;
  std::vector<std::vector<std::string>> solution_shingles_;  // sorted, unique
};

std::vector<ScoredChunk> leakage_filter(std::vector<ScoredChunk> chunks,
                                        std::span<const std::string> solutions,
                                        double threshold = 0.6);

}  // namespace qeval::retrieval
