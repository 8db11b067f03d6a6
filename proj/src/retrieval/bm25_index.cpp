#include "qeval/retrieval/bm25_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "qeval/jsonl.hpp"
#include "qeval/text.hpp"

namespace qeval::retrieval {

using nlohmann::json;

namespace {

std::vector<std::string> distinct_terms(std::string_view text) {
  auto terms = tokenize_terms(text);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

}  // namespace

void Bm25Index::index_ids() {
  row_of_.clear();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (!row_of_.emplace(chunks_[i]->chunk_id, i).second) {
      throw RetrievalError("bm25 index: duplicate chunk id " + chunks_[i]->chunk_id);
    }
  }
}

Bm25Index Bm25Index::build(std::vector<ChunkPtr> chunks, Bm25Params params) {
  if (chunks.empty()) throw RetrievalError("cannot build a BM25 index over zero chunks");
  Bm25Index idx;
  idx.params_ = params;
  idx.chunks_ = std::move(chunks);
  idx.index_ids();
  double total = 0.0;
  for (std::size_t doc = 0; doc < idx.chunks_.size(); ++doc) {
    auto terms = tokenize_terms(idx.chunks_[doc]->text);
    idx.doc_len_.push_back(static_cast<std::uint32_t>(terms.size()));
    total += static_cast<double>(terms.size());
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[t];
    for (auto& [term, count] : tf) {
      idx.postings_[term].emplace_back(static_cast<std::uint32_t>(doc), count);
    }
  }
  idx.avgdl_ = total / static_cast<double>(idx.chunks_.size());
  return idx;
}

double Bm25Index::idf(const std::string& term) const {
  auto it = postings_.find(term);
  double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
  double n = static_cast<double>(chunks_.size());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> Bm25Index::score_all(std::string_view text) const {
  std::vector<double> scores(chunks_.size(), 0.0);
  const double k1 = params_.k1;
  const double b = params_.b;
  for (const auto& term : distinct_terms(text)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    double w = idf(term);
    for (auto [doc, tf] : it->second) {
      double len_norm = avgdl_ > 0.0 ? doc_len_[doc] / avgdl_ : 0.0;
      double f = static_cast<double>(tf);
      scores[doc] += w * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_norm));
    }
  }
  return scores;
}

std::vector<ScoredChunk> Bm25Index::query(std::string_view text, std::size_t k) const {
  auto scores = score_all(text);
  std::vector<ScoredChunk> hits;
  for (std::size_t doc = 0; doc < scores.size(); ++doc) {
    if (scores[doc] > 0.0) hits.push_back({chunks_[doc], scores[doc], "bm25"});
  }
  std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), ranks_before);
  hits.resize(n);
  return hits;
}

double Bm25Index::score_of(std::string_view text, const std::string& chunk_id) const {
  auto row = row_of_.find(chunk_id);
  if (row == row_of_.end()) return 0.0;
  const double k1 = params_.k1;
  const double b = params_.b;
  double score = 0.0;
  for (const auto& term : distinct_terms(text)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), static_cast<std::uint32_t>(row->second),
                                [](const auto& p, std::uint32_t d) { return p.first < d; });
    if (pos == list.end() || pos->first != row->second) continue;
    double f = static_cast<double>(pos->second);
    double len_norm = avgdl_ > 0.0 ? doc_len_[row->second] / avgdl_ : 0.0;
    score += idf(term) * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_norm));
  }
  return score;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RetrievalError("cannot write " + path.string());
  json header{{"format", "qeval-bm25-1"},
              {"k1", params_.k1},
              {"b", params_.b},
              {"count", chunks_.size()},
              {"doc_len", doc_len_}};
  out << dump_compact(header) << '\n';
  std::set<std::string> terms;
  for (const auto& [term, _] : postings_) terms.insert(term);
  for (const auto& term : terms) {
    json postings = json::array();
    for (auto [doc, tf] : postings_.at(term)) postings.push_back({doc, tf});
    out << dump_compact(json{{"t", term}, {"p", postings}}) << '\n';
  }
  if (!out) throw RetrievalError("write failed: " + path.string());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path, std::vector<ChunkPtr> chunks) {
  auto lines = read_jsonl(path);
  if (lines.empty()) throw RetrievalError("empty BM25 index file " + path.string());
  Bm25Index idx;
  try {
    const auto& header = lines.front();
    idx.params_.k1 = header.at("k1").get<double>();
    idx.params_.b = header.at("b").get<double>();
    if (header.at("count").get<std::size_t>() != chunks.size()) {
      throw RetrievalError("BM25 index at " + path.string() + " does not match the chunk store; rebuild it");
    }
    idx.doc_len_ = header.at("doc_len").get<std::vector<std::uint32_t>>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto& list = idx.postings_[lines[i].at("t").get<std::string>()];
      for (const auto& p : lines[i].at("p")) list.emplace_back(p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>());
    }
  } catch (const json::exception& e) {
    throw RetrievalError("corrupt BM25 index " + path.string() + ": " + e.what());
  }
  if (idx.doc_len_.size() != chunks.size() || chunks.empty()) {
    throw RetrievalError("BM25 index at " + path.string() + " does not match the chunk store; rebuild it");
  }
  double total = 0.0;
  for (auto len : idx.doc_len_) total += len;
  idx.avgdl_ = total / static_cast<double>(chunks.size());
  idx.chunks_ = std::move(chunks);
  idx.index_ids();
  return idx;
}

}  // namespace qeval::retrieval
