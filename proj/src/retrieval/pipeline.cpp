#include "qeval/retrieval/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "qeval/hash.hpp"
#include "qeval/jsonl.hpp"

namespace qeval::retrieval {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::dense: return "dense";
    case Stage::bm25: return "bm25";
    case Stage::cosine_rerank: return "cosine_rerank";
    case Stage::cross_rerank: return "cross_rerank";
  }
  return "dense";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (Stage s : {Stage::dense, Stage::bm25, Stage::cosine_rerank, Stage::cross_rerank}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void RetrievalPipelineConfig::validate() const {
  if (corpora.empty()) throw ConfigError("corpora: at least one corpus is required");
  if (std::set<Corpus>(corpora.begin(), corpora.end()).size() != corpora.size()) {
    throw ConfigError("corpora: duplicate corpus");
  }
  if (depth_k < 1) throw ConfigError("depth_k: must be at least 1");
  if (pool() < depth_k) throw ConfigError("candidate_pool: must be at least depth_k");
  if (cascade.empty()) throw ConfigError("cascade: must not be empty");
  if (cascade.front() != Stage::dense && cascade.front() != Stage::bm25) {
    throw ConfigError("cascade: must begin with dense or bm25");
  }
  if (fusion) {
    if (fusion->w_dense < 0.0 || fusion->w_sparse < 0.0) throw ConfigError("fusion: weights must be >= 0");
    if (fusion->w_dense == 0.0 && fusion->w_sparse == 0.0) throw ConfigError("fusion: weights are both zero");
  }
  if (!(leakage_threshold > 0.0 && leakage_threshold <= 1.0)) {
    throw ConfigError("leakage_threshold: must be in (0, 1]");
  }
  if (context_token_cap < 1) throw ConfigError("context_token_cap: must be at least 1");
}

std::string RetrievalPipelineConfig::cascade_label() const {
  std::string label;
  for (Stage s : cascade) {
    if (!label.empty()) label += '>';
    label += to_string(s);
  }
  return label;
}

json to_json(const RetrievalPipelineConfig& cfg) {
  json corpora = json::array();
  for (Corpus c : cfg.corpora) corpora.push_back(std::string(to_string(c)));
  json cascade = json::array();
  for (Stage s : cfg.cascade) cascade.push_back(std::string(to_string(s)));
  json j{{"corpora", corpora},
         {"depth_k", cfg.depth_k},
         {"metric", std::string(to_string(cfg.metric))},
         {"cascade", cascade},
         {"fusion", nullptr},
         {"candidate_pool", cfg.pool()},
         {"leakage_filter_on", cfg.leakage_filter_on},
         {"leakage_threshold", cfg.leakage_threshold},
         {"context_token_cap", cfg.context_token_cap}};
  if (cfg.fusion) j["fusion"] = {{"w_dense", cfg.fusion->w_dense}, {"w_sparse", cfg.fusion->w_sparse}};
  return j;
}

namespace {

template <typename T>
T field_as(const json& j, const std::string& where, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace

RetrievalPipelineConfig retrieval_config_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  static const std::set<std::string> known{"corpora",        "depth_k",           "metric",
                                           "cascade",        "fusion",            "candidate_pool",
                                           "leakage_filter_on", "leakage_threshold", "context_token_cap"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(where + "." + key + ": unknown field");
  }
  RetrievalPipelineConfig cfg;
  if (j.contains("corpora")) {
    cfg.corpora.clear();
    for (const auto& name : field_as<std::vector<std::string>>(j, where, "corpora")) {
      auto c = parse_corpus(name);
      if (!c) throw ConfigError(where + ".corpora: unknown corpus '" + name + "' (expected docs or code)");
      cfg.corpora.push_back(*c);
    }
  }
  auto positive = [&](const char* key) {
    auto v = field_as<long long>(j, where, key);
    if (v < 1) throw ConfigError(where + "." + key + ": must be at least 1");
    return static_cast<std::size_t>(v);
  };
  if (j.contains("depth_k")) cfg.depth_k = positive("depth_k");
  if (j.contains("candidate_pool") && !j.at("candidate_pool").is_null()) {
    cfg.candidate_pool = positive("candidate_pool");
  }
  if (j.contains("metric")) {
    auto name = field_as<std::string>(j, where, "metric");
    auto m = parse_metric(name);
    if (!m) throw ConfigError(where + ".metric: unknown metric '" + name + "' (expected l2 or cosine)");
    cfg.metric = *m;
  }
  if (j.contains("cascade")) {
    cfg.cascade.clear();
    for (const auto& name : field_as<std::vector<std::string>>(j, where, "cascade")) {
      auto s = parse_stage(name);
      if (!s) throw ConfigError(where + ".cascade: unknown stage '" + name + "'");
      cfg.cascade.push_back(*s);
    }
  }
  if (j.contains("fusion") && !j.at("fusion").is_null()) {
    const auto& f = j.at("fusion");
    if (!f.is_object()) throw ConfigError(where + ".fusion: expected an object or null");
    FusionWeights w;
    if (f.contains("w_dense")) w.w_dense = field_as<double>(f, where + ".fusion", "w_dense");
    if (f.contains("w_sparse")) w.w_sparse = field_as<double>(f, where + ".fusion", "w_sparse");
    cfg.fusion = w;
  }
  if (j.contains("leakage_filter_on")) cfg.leakage_filter_on = field_as<bool>(j, where, "leakage_filter_on");
  if (j.contains("leakage_threshold")) cfg.leakage_threshold = field_as<double>(j, where, "leakage_threshold");
  if (j.contains("context_token_cap")) cfg.context_token_cap = field_as<long long>(j, where, "context_token_cap");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + "." + e.what());
  }
  return cfg;
}

CorpusIndex CorpusIndex::build(Corpus corpus, std::vector<ChunkPtr> chunks,
                               const gateway::Embedder& embedder, Bm25Params params) {
  CorpusIndex idx;
  idx.corpus = corpus;
  idx.chunks = chunks;
  idx.dense = DenseIndex::build(chunks, embedder);
  if (!chunks.empty()) idx.sparse = Bm25Index::build(chunks, params);
  return idx;
}

namespace {

std::string corpus_hash(const std::vector<ChunkPtr>& chunks) {
  std::string all;
  for (const auto& c : chunks) {
    all += dump_compact(to_json(*c));
    all += '\n';
  }
  return sha256_hex(all);
}

}  // namespace

void save_corpus_index(const fs::path& dir, const CorpusIndex& index, const ChunkingParams& chunking) {
  fs::path root = dir / std::string(to_string(index.corpus));
  fs::create_directories(root);
  save_chunks(root / "chunks.jsonl", index.chunks);
  if (index.sparse) {
    index.sparse->save(root / "bm25.jsonl");
  } else {
    fs::remove(root / "bm25.jsonl");
  }
  json extra{{"corpus", std::string(to_string(index.corpus))},
             {"corpus_sha256", corpus_hash(index.chunks)},
             {"chunking", {{"max_lines", chunking.max_lines}, {"overlap_lines", chunking.overlap_lines}}},
             {"metrics", {"l2", "cosine"}}};
  // An empty corpus still records which embedder it was built for.
  std::string embedder = index.dense.embedder_id();
  index.dense.save(root / dense_index_dirname(embedder), extra);
}

CorpusIndex load_corpus_index(const fs::path& dir, Corpus corpus, const std::string& embedder_id) {
  fs::path root = dir / std::string(to_string(corpus));
  std::string name(to_string(corpus));
  if (!fs::exists(root / "chunks.jsonl")) {
    throw MissingIndexError("no index for corpus '" + name + "' under " + dir.string() +
                            "; run `qeval index` first");
  }
  CorpusIndex idx;
  idx.corpus = corpus;
  idx.chunks = load_chunks(root / "chunks.jsonl");
  fs::path dense_dir = root / dense_index_dirname(embedder_id);
  if (idx.chunks.empty()) {
    idx.dense = DenseIndex::from_vectors(embedder_id, {}, {});
    return idx;
  }
  if (!fs::exists(dense_dir / "manifest.json")) {
    throw MissingIndexError("no dense index for corpus '" + name + "' with embedder '" + embedder_id +
                            "'; run `qeval index` with that embedder first");
  }
  idx.dense = DenseIndex::load(dense_dir, idx.chunks);
  if (idx.dense.embedder_id() != embedder_id) {
    throw RetrievalError("dense index in " + dense_dir.string() + " was built with '" +
                         idx.dense.embedder_id() + "', not '" + embedder_id + "'");
  }
  if (!fs::exists(root / "bm25.jsonl")) {
    throw MissingIndexError("no BM25 index for corpus '" + name + "'; run `qeval index` first");
  }
  idx.sparse = Bm25Index::load(root / "bm25.jsonl", idx.chunks);
  return idx;
}

std::vector<std::string> RetrievalResult::chunk_ids() const {
  std::vector<std::string> ids;
  ids.reserve(chunks.size());
  for (const auto& c : chunks) ids.push_back(c.chunk->chunk_id);
  return ids;
}

std::string render_context_block(std::vector<ScoredChunk>& chunks, long long token_cap) {
  long long used = 0;
  std::size_t keep = 0;
  for (; keep < chunks.size(); ++keep) {
    long long cost = chunks[keep].chunk->token_estimate;
    if (keep > 0 && used + cost > token_cap) break;
    used += cost;
  }
  chunks.resize(keep);
  if (chunks.empty()) return {};

  std::string block = "Reference material retrieved for this task:\n";
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const Chunk& c = *chunks[i].chunk;
    block += "\n[" + std::to_string(i + 1) + "] " + std::string(to_string(c.corpus)) + ": " +
             c.source_path + " (lines " + std::to_string(c.line_start) + "-" +
             std::to_string(c.line_end) + ")\n~~~\n";
    block += c.text;
    if (block.back() != '\n') block.push_back('\n');
    block += "~~~\n";
  }
  return block;
}

RetrievalEngine::RetrievalEngine(std::vector<CorpusIndex> indexes,
                                 std::shared_ptr<const gateway::Embedder> embedder,
                                 std::shared_ptr<const PairScorer> cross_scorer,
                                 std::vector<std::string> leakage_reference)
    : indexes_(std::move(indexes)),
      embedder_(std::move(embedder)),
      cross_scorer_(std::move(cross_scorer)),
      leakage_reference_(std::move(leakage_reference)) {
  if (!embedder_) throw RetrievalError("retrieval engine needs an embedder");
  if (!cross_scorer_) cross_scorer_ = std::make_shared<LexicalOverlapScorer>();
  for (const auto& idx : indexes_) {
    if (idx.dense.size() > 0 && idx.dense.embedder_id() != embedder_->id()) {
      throw RetrievalError("corpus '" + std::string(to_string(idx.corpus)) + "' was indexed with '" +
                           idx.dense.embedder_id() + "' but the engine embeds queries with '" +
                           embedder_->id() + "'");
    }
  }
}

bool RetrievalEngine::has_corpus(Corpus corpus) const {
  return std::any_of(indexes_.begin(), indexes_.end(), [&](const auto& i) { return i.corpus == corpus; });
}

const RetrievalEngine::View& RetrievalEngine::view_for(const std::vector<Corpus>& wanted) const {
  std::vector<Corpus> key(wanted);
  std::sort(key.begin(), key.end());
  std::lock_guard lock(views_mutex_);
  if (auto it = views_.find(key); it != views_.end()) return *it->second;

  auto view = std::make_unique<View>();
  std::vector<const DenseIndex*> parts;
  for (Corpus c : key) {
    auto it = std::find_if(indexes_.begin(), indexes_.end(), [&](const auto& i) { return i.corpus == c; });
    if (it == indexes_.end()) {
      throw MissingIndexError("no index for corpus '" + std::string(to_string(c)) +
                              "'; run `qeval index` first");
    }
    view->chunks.insert(view->chunks.end(), it->chunks.begin(), it->chunks.end());
    parts.push_back(&it->dense);
  }
  view->dense = DenseIndex::concat(parts);
  if (key.size() == 1) {
    auto it = std::find_if(indexes_.begin(), indexes_.end(), [&](const auto& i) { return i.corpus == key[0]; });
    view->sparse = it->sparse;
  } else if (!view->chunks.empty()) {
    // Collection statistics (N, df, avgdl) must cover the merged collection.
    view->sparse = Bm25Index::build(view->chunks);
  }
  return *views_.emplace(key, std::move(view)).first->second;
}

RetrievalResult RetrievalEngine::retrieve_context(const RetrievalPipelineConfig& cfg,
                                                  std::string_view query,
                                                  const BenchmarkTask& task) const {
  cfg.validate();
  const View& view = view_for(cfg.corpora);
  RetrievalResult result;
  if (view.chunks.empty()) {
    result.corpus_empty = true;
    return result;
  }

  const std::size_t pool = cfg.pool();
  std::optional<EmbeddedQuery> q;
  auto embedded = [&]() -> const EmbeddedQuery& {
    if (!q) {
      std::vector<std::string> texts{std::string(query)};
      q = EmbeddedQuery{embedder_->id(), embedder_->embed(texts).at(0)};
    }
    return *q;
  };
  auto dense_list = [&] { return view.dense.query(embedded(), pool, cfg.metric); };
  auto sparse_list = [&] { return view.sparse->query(query, pool); };

  std::vector<ScoredChunk> ranked;
  for (std::size_t i = 0; i < cfg.cascade.size(); ++i) {
    Stage stage = cfg.cascade[i];
    std::string label(to_string(stage));
    if (i == 0) {
      ranked = stage == Stage::dense ? dense_list() : sparse_list();
      continue;
    }
    switch (stage) {
      case Stage::dense:
        ranked = cfg.fusion ? fuse_scores(dense_list(), ranked, cfg.fusion->w_dense, cfg.fusion->w_sparse, pool)
                            : rerank(query, std::move(ranked), VectorScorer(view.dense, embedded(), cfg.metric), label);
        break;
      case Stage::bm25:
        ranked = cfg.fusion ? fuse_scores(ranked, sparse_list(), cfg.fusion->w_dense, cfg.fusion->w_sparse, pool)
                            : rerank(query, std::move(ranked), Bm25Scorer(*view.sparse), label);
        break;
      case Stage::cosine_rerank:
        ranked = rerank(query, std::move(ranked), VectorScorer(view.dense, embedded(), Metric::cosine), label);
        break;
      case Stage::cross_rerank:
        try {
          ranked = rerank(query, ranked, *cross_scorer_, label);
        } catch (const StageError&) {
          // Keep the upstream order; the caller records the degradation.
          result.degraded_stages.push_back(label);
        }
        break;
    }
  }

  if (cfg.leakage_filter_on) {
    std::vector<std::string> refs(leakage_reference_);
    refs.push_back(task.canonical_solution);
    ranked = LeakageFilter(refs, cfg.leakage_threshold).apply(std::move(ranked));
  }
  if (ranked.size() > cfg.depth_k) ranked.resize(cfg.depth_k);
  result.context_block = render_context_block(ranked, cfg.context_token_cap);
  result.chunks = std::move(ranked);
  return result;
}

}  // namespace qeval::retrieval
