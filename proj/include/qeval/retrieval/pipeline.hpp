#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/gateway/embedder.hpp"
#include "qeval/retrieval/bm25_index.hpp"
#include "qeval/retrieval/chunk.hpp"
#include "qeval/retrieval/dense_index.hpp"
#include "qeval/retrieval/ingest.hpp"
#include "qeval/retrieval/scoring.hpp"
#include "qeval/task.hpp"

namespace qeval::retrieval {

enum class Stage { dense, bm25, cosine_rerank, cross_rerank };

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view text);

struct FusionWeights {
  double w_dense = 2.0;
  double w_sparse = 1.0;
};

class ConfigError : public RetrievalError {
 public:
  using RetrievalError::RetrievalError;
};

struct RetrievalPipelineConfig {
  std::vector<Corpus> corpora{Corpus::docs};
  std::size_t depth_k = 4;
  Metric metric = Metric::l2;
  std::vector<Stage> cascade{Stage::dense};
  /// When set, a dense/bm25 stage after the first fuses its own list with the
  /// running one; otherwise it rescores the running candidates.
  std::optional<FusionWeights> fusion;
  std::optional<std::size_t> candidate_pool;  // default 4 x depth_k
  bool leakage_filter_on = true;
  double leakage_threshold = 0.6;
  long long context_token_cap = 8000;

  std::size_t pool() const { return candidate_pool.value_or(4 * depth_k); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// e.g. "dense>bm25>cosine_rerank"
  std::string cascade_label() const;
};

nlohmann::json to_json(const RetrievalPipelineConfig& cfg);
/// Missing fields keep their defaults; errors name the field (e.g. "retrieval.depth_k").
RetrievalPipelineConfig retrieval_config_from_json(const nlohmann::json& j,
                                                   const std::string& where = "retrieval");

/// Everything built for one corpus.
struct CorpusIndex {
  Corpus corpus = Corpus::docs;
  std::vector<ChunkPtr> chunks;
  DenseIndex dense;
  std::optional<Bm25Index> sparse;  // absent for an empty corpus

  static CorpusIndex build(Corpus corpus, std::vector<ChunkPtr> chunks,
                           const gateway::Embedder& embedder, Bm25Params params = {});
};

/// Layout: <dir>/<corpus>/chunks.jsonl, <dir>/<corpus>/bm25.jsonl,
/// <dir>/<corpus>/<dense_index_dirname(embedder)>/{manifest.json,vectors.f32}.
void save_corpus_index(const std::filesystem::path& dir, const CorpusIndex& index,
                       const ChunkingParams& chunking);
/// Throws MissingIndexError when the corpus or the embedder's dense index is absent.
CorpusIndex load_corpus_index(const std::filesystem::path& dir, Corpus corpus,
                              const std::string& embedder_id);

class MissingIndexError : public RetrievalError {
 public:
  using RetrievalError::RetrievalError;
};

struct RetrievalResult {
  std::string context_block;  // empty when nothing was retrieved
  std::vector<ScoredChunk> chunks;
  std::vector<std::string> degraded_stages;  // stages that failed and were skipped
  bool corpus_empty = false;

  std::vector<std::string> chunk_ids() const;
};

/// Renders "[i] <corpus>: <path> (lines a-b)" headers each followed by the
/// chunk text between ~~~ fences. Chunks past the token cap are dropped
/// (the first chunk is always kept).
std::string render_context_block(std::vector<ScoredChunk>& chunks, long long token_cap);

/// Executes retrieval cascades over a fixed set of corpus indexes. Safe for
/// concurrent use once constructed.
class RetrievalEngine {
 public:
  RetrievalEngine(std::vector<CorpusIndex> indexes, std::shared_ptr<const gateway::Embedder> embedder,
                  std::shared_ptr<const PairScorer> cross_scorer = nullptr,
                  std::vector<std::string> leakage_reference = {});

  /// `task.canonical_solution` is always part of the leakage reference set.
  RetrievalResult retrieve_context(const RetrievalPipelineConfig& cfg, std::string_view query,
                                   const BenchmarkTask& task) const;

  bool has_corpus(Corpus corpus) const;

 private:
  struct View {
    std::vector<ChunkPtr> chunks;
    DenseIndex dense;
    std::optional<Bm25Index> sparse;
  };
  const View& view_for(const std::vector<Corpus>& corpora) const;

  std::vector<CorpusIndex> indexes_;
  std::shared_ptr<const gateway::Embedder> embedder_;
  std::shared_ptr<const PairScorer> cross_scorer_;
  std::vector<std::string> leakage_reference_;
  mutable std::mutex views_mutex_;
  mutable std::map<std::vector<Corpus>, std::unique_ptr<View>> views_;
};

}  // namespace qeval::retrieval
