#include "qeval/retrieval/scoring.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "qeval/gateway/gateway.hpp"
#include "qeval/text.hpp"

namespace qeval::retrieval {

std::vector<double> normalize_scores(std::span<const double> scores) {
  std::vector<double> out(scores.size(), 1.0);
  if (scores.empty()) return out;
  auto [min_it, max_it] = std::minmax_element(scores.begin(), scores.end());
  double lo = std::min(0.0, *min_it);
  double hi = *max_it;
  if (hi == *min_it) return out;  // constant list
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) / (hi - lo);
  return out;
}

std::vector<ScoredChunk> fuse_scores(const std::vector<ScoredChunk>& dense,
                                     const std::vector<ScoredChunk>& sparse, double w_dense,
                                     double w_sparse, std::size_t k) {
  if (w_dense < 0.0 || w_sparse < 0.0) throw std::invalid_argument("fusion weights must be non-negative");
  if (w_dense == 0.0 && w_sparse == 0.0) throw std::invalid_argument("fusion weights are both zero");

  std::vector<ScoredChunk> fused;
  std::unordered_map<std::string, std::size_t> slot;
  // A side with weight 0 contributes neither score nor candidates.
  auto add = [&](const std::vector<ScoredChunk>& list, double weight) {
    if (weight == 0.0) return;
    std::vector<double> raw;
    raw.reserve(list.size());
    for (const auto& s : list) raw.push_back(s.score);
    auto norm = normalize_scores(raw);
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto [it, fresh] = slot.emplace(list[i].chunk->chunk_id, fused.size());
      if (fresh) fused.push_back({list[i].chunk, 0.0, "fusion"});
      fused[it->second].score += weight * norm[i];
    }
  };
  add(dense, w_dense);
  add(sparse, w_sparse);
  sort_ranked(fused);
  if (fused.size() > k) fused.resize(k);
  return fused;
}

std::vector<double> LexicalOverlapScorer::score(std::string_view query,
                                                std::span<const ScoredChunk> candidates) const {
  auto q = tokenize_terms(query);
  std::unordered_set<std::string> distinct(q.begin(), q.end());
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto terms = tokenize_terms(c.chunk->text);
    std::unordered_set<std::string> present(terms.begin(), terms.end());
    double hits = 0.0;
    for (const auto& t : distinct) hits += present.count(t) ? 1.0 : 0.0;
    out.push_back(hits);
  }
  return out;
}

GatewayCrossScorer::GatewayCrossScorer(gateway::Gateway& gateway, std::string model_id)
    : gateway_(&gateway), model_id_(std::move(model_id)) {}

std::vector<double> GatewayCrossScorer::score(std::string_view query,
                                              std::span<const ScoredChunk> candidates) const {
  std::vector<std::string> docs;
  docs.reserve(candidates.size());
  for (const auto& c : candidates) docs.push_back(c.chunk->text);
  auto scores = gateway_->score_pairs(model_id_, std::string(query), docs);
  if (scores.size() != candidates.size()) {
    throw RetrievalError("reranker returned " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(candidates.size()) + " candidates");
  }
  return scores;
}

VectorScorer::VectorScorer(const DenseIndex& index, EmbeddedQuery query, Metric metric)
    : index_(&index), query_(std::move(query)), metric_(metric) {}

std::vector<double> VectorScorer::score(std::string_view,
                                        std::span<const ScoredChunk> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto s = index_->score_of(query_, c.chunk->chunk_id, metric_);
    if (!s) throw RetrievalError("no stored vector for " + c.chunk->chunk_id);
    out.push_back(*s);
  }
  return out;
}

std::vector<double> Bm25Scorer::score(std::string_view query,
                                      std::span<const ScoredChunk> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(index_->score_of(query, c.chunk->chunk_id));
  return out;
}

std::vector<ScoredChunk> rerank(std::string_view query, std::vector<ScoredChunk> candidates,
                                const PairScorer& scorer, const std::string& stage) {
  if (candidates.size() <= 1) return candidates;
  std::vector<double> scores;
  try {
    scores = scorer.score(query, candidates);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  if (scores.size() != candidates.size()) throw StageError(stage, "scorer returned the wrong number of scores");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    candidates[i].score = scores[i];
    candidates[i].stage = stage;
  }
  sort_ranked(candidates);
  return candidates;
}

namespace {

std::vector<std::string> shingles(std::string_view text, std::size_t n) {
  auto tokens = code_tokens(text);
  std::vector<std::string> out;
  if (tokens.empty()) return out;
  auto join = [&](std::size_t first, std::size_t count) {
    std::string s;
    for (std::size_t i = first; i < first + count; ++i) {
      if (i != first) s.push_back('\x1f');
      s += tokens[i];
    }
    return s;
  };
  if (tokens.size() < n) {
    out.push_back(join(0, tokens.size()));
  } else {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) out.push_back(join(i, n));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard_sorted(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

constexpr std::size_t kShingleSize = 8;

}  // namespace

double shingle_jaccard(std::string_view a, std::string_view b, std::size_t n) {
  if (n == 0) throw std::invalid_argument("shingle size must be positive");
  return jaccard_sorted(shingles(a, n), shingles(b, n));
}

LeakageFilter::LeakageFilter(std::span<const std::string> solutions, double threshold)
    : threshold_(threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("leakage threshold must be in (0, 1]");
  }
  for (const auto& s : solutions) {
    auto sh = shingles(s, kShingleSize);
    if (!sh.empty()) solution_shingles_.push_back(std::move(sh));
  }
}

bool LeakageFilter::leaks(std::string_view text) const {
  if (solution_shingles_.empty()) return false;
  auto sh = shingles(text, kShingleSize);
  for (const auto& sol : solution_shingles_) {
    if (jaccard_sorted(sh, sol) >= threshold_) return true;
  }
  return false;
}

std::vector<ScoredChunk> LeakageFilter::apply(std::vector<ScoredChunk> chunks) const {
  std::erase_if(chunks, [&](const ScoredChunk& c) { return leaks(c.chunk->text); });
  return chunks;
}

std::vector<ScoredChunk> leakage_filter(std::vector<ScoredChunk> chunks,
                                        std::span<const std::string> solutions, double threshold) {
  return LeakageFilter(solutions, threshold).apply(std::move(chunks));
}

}  // namespace qeval::retrieval
