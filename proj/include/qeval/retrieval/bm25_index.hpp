#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qeval/retrieval/chunk.hpp"

namespace qeval::retrieval {

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

/// Okapi BM25 over tokenize_terms() tokens.
///   idf(t)     = ln(1 + (N - df + 0.5) / (df + 0.5))
///   score(d,q) = sum over distinct query terms of
///                idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
class Bm25Index {
 public:
  /// Throws RetrievalError on an empty chunk list.
  static Bm25Index build(std::vector<ChunkPtr> chunks, Bm25Params params = {});

  /// Top-k by score; documents scoring 0 are left out.
  std::vector<ScoredChunk> query(std::string_view text, std::size_t k) const;
  /// Score of one stored chunk (0 for unknown ids).
  double score_of(std::string_view text, const std::string& chunk_id) const;
  double idf(const std::string& term) const;

  /// Postings records: a header line, then one line per term in sorted order.
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path, std::vector<ChunkPtr> chunks);

  std::size_t size() const noexcept { return chunks_.size(); }
  double average_length() const noexcept { return avgdl_; }
  const Bm25Params& params() const noexcept { return params_; }

 private:
  std::vector<double> score_all(std::string_view text) const;
  void index_ids();

  Bm25Params params_;
  std::vector<ChunkPtr> chunks_;
  std::vector<std::uint32_t> doc_len_;
  double avgdl_ = 0.0;
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

}  // namespace qeval::retrieval
