#include "qeval/retrieval/dense_index.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "qeval/hash.hpp"

namespace qeval::retrieval {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Metric metric) {
  return metric == Metric::cosine ? "cosine" : "l2";
}

std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "l2") return Metric::l2;
  if (text == "cosine") return Metric::cosine;
  return std::nullopt;
}

std::string dense_index_dirname(std::string_view embedder_id) {
  std::string name = "dense-";
  for (char c : embedder_id) {
    bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    name.push_back(safe ? c : '_');
  }
  // Sanitizing can merge distinct ids; the hash keeps the directory unique.
  name += "-" + sha256_hex(embedder_id).substr(0, 8);
  return name;
}

DenseIndex DenseIndex::from_vectors(std::string embedder_id, std::vector<ChunkPtr> chunks,
                                    const std::vector<std::vector<float>>& vectors) {
  if (chunks.size() != vectors.size()) {
    throw RetrievalError("dense index: " + std::to_string(chunks.size()) + " chunks but " +
                         std::to_string(vectors.size()) + " vectors");
  }
  DenseIndex idx;
  idx.embedder_id_ = std::move(embedder_id);
  idx.dimension_ = vectors.empty() ? 0 : vectors.front().size();
  idx.data_.reserve(idx.dimension_ * vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (v.size() != idx.dimension_ || idx.dimension_ == 0) {
      throw RetrievalError("dense index: vector " + std::to_string(i) + " has dimension " +
                           std::to_string(v.size()) + ", expected " + std::to_string(idx.dimension_));
    }
    double sq = 0.0;
    for (float x : v) {
      if (!std::isfinite(x)) throw RetrievalError("dense index: non-finite value in vector " + std::to_string(i));
      sq += static_cast<double>(x) * x;
    }
    idx.norms_.push_back(std::sqrt(sq));
    idx.data_.insert(idx.data_.end(), v.begin(), v.end());
    if (!idx.row_of_.emplace(chunks[i]->chunk_id, i).second) {
      throw RetrievalError("dense index: duplicate chunk id " + chunks[i]->chunk_id);
    }
  }
  idx.chunks_ = std::move(chunks);
  return idx;
}

DenseIndex DenseIndex::build(std::vector<ChunkPtr> chunks, const gateway::Embedder& embedder) {
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c->text);
  auto vectors = chunks.empty() ? std::vector<std::vector<float>>{} : embedder.embed(texts);
  return from_vectors(embedder.id(), std::move(chunks), vectors);
}

DenseIndex DenseIndex::concat(std::span<const DenseIndex* const> parts) {
  DenseIndex out;
  for (const DenseIndex* p : parts) {
    if (p->size() == 0) continue;
    if (out.size() == 0) {
      out.embedder_id_ = p->embedder_id_;
      out.dimension_ = p->dimension_;
    } else if (p->embedder_id_ != out.embedder_id_ || p->dimension_ != out.dimension_) {
      throw RetrievalError("cannot merge dense indexes built with different embedders (" +
                           out.embedder_id_ + ", " + p->embedder_id_ + ")");
    }
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (!out.row_of_.emplace(p->chunks_[i]->chunk_id, out.chunks_.size()).second) {
        throw RetrievalError("dense index: duplicate chunk id " + p->chunks_[i]->chunk_id);
      }
      out.chunks_.push_back(p->chunks_[i]);
    }
    out.data_.insert(out.data_.end(), p->data_.begin(), p->data_.end());
    out.norms_.insert(out.norms_.end(), p->norms_.begin(), p->norms_.end());
  }
  return out;
}

void DenseIndex::check_query(const EmbeddedQuery& q) const {
  if (q.embedder_id != embedder_id_) {
    throw RetrievalError("query embedded with '" + q.embedder_id + "' but the index was built with '" +
                         embedder_id_ + "'");
  }
  if (q.vector.size() != dimension_) {
    throw RetrievalError("query dimension " + std::to_string(q.vector.size()) +
                         " does not match index dimension " + std::to_string(dimension_));
  }
}

double DenseIndex::score_row(std::span<const float> q, double q_norm, std::size_t row,
                             Metric metric) const {
  const float* v = data_.data() + row * dimension_;
  if (metric == Metric::l2) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dimension_; ++d) {
      double diff = static_cast<double>(q[d]) - v[d];
      sq += diff * diff;
    }
    return -std::sqrt(sq);
  }
  double dot = 0.0;
  for (std::size_t d = 0; d < dimension_; ++d) dot += static_cast<double>(q[d]) * v[d];
  double denom = q_norm * norms_[row];
  return denom > 0.0 ? dot / denom : 0.0;
}

namespace {

double norm_of(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

}  // namespace

std::vector<ScoredChunk> DenseIndex::query(const EmbeddedQuery& q, std::size_t k,
                                           Metric metric) const {
  if (chunks_.empty() || k == 0) return {};
  check_query(q);
  double q_norm = norm_of(q.vector);
  std::vector<ScoredChunk> all;
  all.reserve(chunks_.size());
  for (std::size_t row = 0; row < chunks_.size(); ++row) {
    all.push_back({chunks_[row], score_row(q.vector, q_norm, row, metric), "dense"});
  }
  std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
  all.resize(n);
  return all;
}

std::optional<double> DenseIndex::score_of(const EmbeddedQuery& q, const std::string& chunk_id,
                                           Metric metric) const {
  auto it = row_of_.find(chunk_id);
  if (it == row_of_.end()) return std::nullopt;
  check_query(q);
  return score_row(q.vector, norm_of(q.vector), it->second, metric);
}

namespace {

std::string chunk_ids_hash(const std::vector<ChunkPtr>& chunks) {
  std::string ids;
  for (const auto& c : chunks) {
    ids += c->chunk_id;
    ids += '\n';
  }
  return sha256_hex(ids);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

void DenseIndex::save(const fs::path& dir, const json& manifest_extra) const {
  fs::create_directories(dir);
  json manifest = manifest_extra.is_object() ? manifest_extra : json::object();
  manifest["format"] = "qeval-dense-1";
  manifest["embedder_id"] = embedder_id_;
  manifest["dimension"] = dimension_;
  manifest["count"] = chunks_.size();
  manifest["chunk_ids_sha256"] = chunk_ids_hash(chunks_);
  manifest["vector_encoding"] = "float32-le-rowmajor";

  std::ofstream vec(dir / "vectors.f32", std::ios::binary | std::ios::trunc);
  if (!vec) throw RetrievalError("cannot write " + (dir / "vectors.f32").string());
  for (float x : data_) {
    std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(x));
    vec.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!vec) throw RetrievalError("write failed: " + (dir / "vectors.f32").string());
  // Manifest last: its presence marks a complete index.
  std::ofstream man(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  man << manifest.dump(2) << '\n';
  if (!man) throw RetrievalError("write failed: " + (dir / "manifest.json").string());
}

DenseIndex DenseIndex::load(const fs::path& dir, std::vector<ChunkPtr> chunks) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw RetrievalError("no dense index at " + dir.string());
  json manifest;
  try {
    manifest = json::parse(man);
  } catch (const json::exception& e) {
    throw RetrievalError("corrupt dense manifest " + dir.string() + ": " + e.what());
  }
  auto count = manifest.at("count").get<std::size_t>();
  auto dim = manifest.at("dimension").get<std::size_t>();
  if (count != chunks.size() || manifest.at("chunk_ids_sha256").get<std::string>() != chunk_ids_hash(chunks)) {
    throw RetrievalError("dense index at " + dir.string() + " does not match the chunk store; rebuild it");
  }
  std::ifstream vec(dir / "vectors.f32", std::ios::binary);
  if (!vec) throw RetrievalError("missing vectors.f32 in " + dir.string());
  std::vector<std::vector<float>> vectors(count, std::vector<float>(dim));
  for (auto& v : vectors) {
    for (auto& x : v) {
      std::uint32_t bits = 0;
      if (!vec.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        throw RetrievalError("truncated vectors.f32 in " + dir.string());
      }
      x = std::bit_cast<float>(to_le(bits));
    }
  }
  return from_vectors(manifest.at("embedder_id").get<std::string>(), std::move(chunks), vectors);
}

}  // namespace qeval::retrieval
