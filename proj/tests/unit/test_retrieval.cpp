#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "qeval/retrieval/pipeline.hpp"
#include "qeval/text.hpp"
#include "test_support.hpp"

using namespace qeval;
using namespace qeval::retrieval;

namespace {

ChunkPtr make_chunk(const std::string& id, const std::string& text, Corpus corpus = Corpus::docs) {
  Chunk c;
  c.chunk_id = id;
  c.corpus = corpus;
  c.source_path = id + ".md";
  c.line_start = 1;
  c.line_end = static_cast<int>(std::count(text.begin(), text.end(), '\n'));
  if (c.line_end == 0) c.line_end = 1;
  c.text = text;
  c.token_estimate = estimate_tokens(text);
  return std::make_shared<const Chunk>(std::move(c));
}

// Embeds by exact text lookup; unknown texts are an error.
class TableEmbedder final : public gateway::Embedder {
 public:
  TableEmbedder(std::string id, std::map<std::string, std::vector<float>> table)
      : id_(std::move(id)), table_(std::move(table)) {}
  const std::string& id() const override { return id_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override {
    std::vector<std::vector<float>> out;
    for (const auto& t : texts) out.push_back(table_.at(t));
    return out;
  }

 private:
  std::string id_;
  std::map<std::string, std::vector<float>> table_;
};

class FailingScorer final : public PairScorer {
 public:
  std::vector<double> score(std::string_view, std::span<const ScoredChunk>) const override {
    throw std::runtime_error("reranker offline");
  }
};

std::vector<std::string> ids_of(const std::vector<ScoredChunk>& list) {
  std::vector<std::string> ids;
  for (const auto& s : list) ids.push_back(s.chunk->chunk_id);
  return ids;
}

// Brute-force reference: full scan in long double, sorted by (score desc, id asc).
std::vector<std::pair<std::string, long double>> brute_force(
    const std::vector<std::vector<float>>& vecs, const std::vector<std::string>& ids,
    const std::vector<float>& q, Metric metric, std::size_t k) {
  std::vector<std::pair<std::string, long double>> all;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    long double dot = 0, qq = 0, vv = 0, dist = 0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      dot += (long double)q[d] * vecs[i][d];
      qq += (long double)q[d] * q[d];
      vv += (long double)vecs[i][d] * vecs[i][d];
      dist += ((long double)q[d] - vecs[i][d]) * ((long double)q[d] - vecs[i][d]);
    }
    long double s = metric == Metric::l2 ? -std::sqrt(dist)
                                         : (qq > 0 && vv > 0 ? dot / (std::sqrt(qq) * std::sqrt(vv)) : 0);
    all.emplace_back(ids[i], s);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Independent BM25: recounts terms per document from scratch.
std::map<std::string, double> bm25_oracle(const std::vector<ChunkPtr>& docs, const std::string& query,
                                          double k1 = 1.5, double b = 0.75) {
  std::vector<std::map<std::string, int>> tf(docs.size());
  std::vector<double> len(docs.size());
  double total = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (auto& t : tokenize_terms(docs[i]->text)) ++tf[i][t];
    len[i] = static_cast<double>(tokenize_terms(docs[i]->text).size());
    total += len[i];
  }
  double avgdl = total / docs.size();
  auto q = tokenize_terms(query);
  std::set<std::string> terms(q.begin(), q.end());
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0;
    for (const auto& t : terms) {
      int df = 0;
      for (auto& m : tf) df += m.count(t) ? 1 : 0;
      double idf = std::log(1.0 + (docs.size() - df + 0.5) / (df + 0.5));
      auto it = tf[i].find(t);
      if (it == tf[i].end()) continue;
      double f = it->second;
      s += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * len[i] / avgdl));
    }
    out[docs[i]->chunk_id] = s;
  }
  return out;
}

std::set<std::string> shingle_oracle(const std::string& text, std::size_t n = 8) {
  auto toks = code_tokens(text);
  std::set<std::string> s;
  if (toks.size() < n) {
    std::string all;
    for (auto& t : toks) all += t + " ";
    if (!toks.empty()) s.insert(all);
    return s;
  }
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string sh;
    for (std::size_t j = i; j < i + n; ++j) sh += toks[j] + " ";
    s.insert(sh);
  }
  return s;
}

double jaccard_oracle(const std::string& a, const std::string& b) {
  auto sa = shingle_oracle(a), sb = shingle_oracle(b);
  std::size_t common = 0;
  for (auto& x : sa) common += sb.count(x);
  std::size_t uni = sa.size() + sb.size() - common;
  return uni == 0 ? 0.0 : double(common) / uni;
}

std::string words(const std::string& prefix, int from, int to) {
  std::string s;
  for (int i = from; i < to; ++i) s += prefix + std::to_string(i) + " ";
  return s;
}

BenchmarkTask task_with_solution(const std::string& solution) {
  BenchmarkTask t;
  t.task_id = "t/0";
  t.prompt = "def f():\n";
  t.canonical_solution = solution;
  t.test = "def check(c):\n    pass\n";
  t.entry_point = "f";
  return t;
}

}  // namespace

TEST_CASE("code chunking produces overlapping 60-line windows") {
  std::string content;
  for (int i = 1; i <= 300; ++i) content += "x" + std::to_string(i) + " = " + std::to_string(i) + "\n";
  auto chunks = chunk_code(content, "pkg/mod.py", ChunkingParams{60, 10});
  // Window oracle: starts at 1, 51, 101, ... until a window reaches line 300.
  std::vector<std::pair<int, int>> expected;
  for (int start = 1;; start += 50) {
    int end = std::min(start + 59, 300);
    expected.emplace_back(start, end);
    if (end == 300) break;
  }
  REQUIRE(chunks.size() == expected.size());
  CHECK(chunks.size() == 6);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].line_start == expected[i].first);
    CHECK(chunks[i].line_end == expected[i].second);
    CHECK(std::count(chunks[i].text.begin(), chunks[i].text.end(), '\n') ==
          chunks[i].line_end - chunks[i].line_start + 1);
    CHECK(chunks[i].text.starts_with("x" + std::to_string(expected[i].first) + " ="));
  }
  CHECK(chunks[0].chunk_id == "code:pkg/mod.py:1-60");
  CHECK(chunk_code("", "empty.py", {}).empty());
}

TEST_CASE("doc chunking splits at headings and caps long sections") {
  std::string doc = "# One\nalpha\n\n## Two\nbeta\nbeta2\n\nTitle three\n===========\ngamma\n";
  auto chunks = chunk_docs(doc, "guide.md", {});
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].line_start == 1);
  CHECK(chunks[1].line_start == 4);
  CHECK(chunks[2].line_start == 8);
  CHECK(chunks[1].text == "## Two\nbeta\nbeta2\n");

  std::string long_section = "# Big\n";
  for (int p = 0; p < 5; ++p) {
    for (int l = 0; l < 20; ++l) long_section += "para" + std::to_string(p) + " line\n";
    long_section += "\n";
  }
  auto pieces = chunk_docs(long_section, "big.md", ChunkingParams{60, 10});
  CHECK(pieces.size() >= 2);
  for (const auto& c : pieces) {
    CHECK(c.line_end - c.line_start + 1 <= 60);
    CHECK(!c.text.empty());
  }
  CHECK(chunk_docs("", "e.md", {}).empty());
}

TEST_CASE("ingest walks roots and reports errors") {
  testing::ScratchDir dir;
  dir.write("repo/a.py", "def a():\n    return 1\n");
  dir.write("repo/sub/b.py", "def b():\n    return 2\n");
  dir.write("repo/.hidden/c.py", "x = 1\n");
  dir.write("repo/readme.md", "# Readme\ntext\n");
  std::vector<std::filesystem::path> roots{dir / "repo"};
  auto code = ingest_corpus(roots, Corpus::code, {});
  REQUIRE(code.size() == 2);
  CHECK(code[0]->source_path == "repo/a.py");
  CHECK(code[1]->source_path == "repo/sub/b.py");
  auto docs = ingest_corpus(roots, Corpus::docs, {});
  CHECK(docs.size() == 1);

  std::vector<std::filesystem::path> missing{dir / "nope"};
  CHECK_THROWS_AS(ingest_corpus(missing, Corpus::code, {}), RetrievalError);
  dir.write("only_docs/x.md", "# x\n");
  std::vector<std::filesystem::path> no_code{dir / "only_docs"};
  CHECK_THROWS_AS(ingest_corpus(no_code, Corpus::code, {}), RetrievalError);
  CHECK_THROWS_AS(ChunkingParams({10, 10}).validate(), RetrievalError);
}

TEST_CASE("dense queries match a brute-force scan") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t dim = 4 + rng() % 61;
    std::size_t n = 1 + rng() % 120;
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<std::vector<float>> vecs(n, std::vector<float>(dim));
    std::vector<ChunkPtr> chunks;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& x : vecs[i]) x = gauss(rng);
      ids.push_back("c" + std::to_string(i));
      chunks.push_back(make_chunk(ids.back(), "text\n"));
    }
    // Plant exact duplicates so the tie-break is exercised.
    if (n > 3) vecs[n - 1] = vecs[0];
    auto index = DenseIndex::from_vectors("toy", chunks, vecs);
    std::vector<float> q(dim);
    for (auto& x : q) x = gauss(rng);
    for (Metric m : {Metric::l2, Metric::cosine}) {
      std::size_t k = 1 + rng() % 10;
      auto got = index.query({"toy", q}, k, m);
      auto want = brute_force(vecs, ids, q, m, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].chunk->chunk_id == want[i].first);
        CHECK(got[i].score == doctest::Approx(static_cast<double>(want[i].second)).epsilon(1e-9));
      }
      // Depth monotonicity: top-k is a prefix of top-(k+1).
      auto deeper = index.query({"toy", q}, k + 1, m);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(deeper[i].chunk->chunk_id == got[i].chunk->chunk_id);
    }
  }
}

TEST_CASE("dense index self-match, empty index and planted neighbours") {
  gateway::FeatureHashEmbedder embedder;
  std::vector<ChunkPtr> chunks;
  for (int i = 0; i < 151; ++i) {
    chunks.push_back(make_chunk("d" + std::to_string(i), "topic" + std::to_string(i) + " qubit gate " +
                                                             std::to_string(i * 7) + "\n"));
  }
  auto index = DenseIndex::build(chunks, embedder);
  CHECK(index.size() == 151);
  auto v = embedder.embed_one(chunks[42]->text);
  auto cos = index.query({embedder.id(), v}, 1, Metric::cosine);
  CHECK(cos[0].chunk->chunk_id == "d42");
  CHECK(cos[0].score == doctest::Approx(1.0));
  auto l2 = index.query({embedder.id(), v}, 1, Metric::l2);
  CHECK(l2[0].chunk->chunk_id == "d42");
  CHECK(l2[0].score == 0.0);

  auto empty = DenseIndex::build({}, embedder);
  CHECK(empty.query({embedder.id(), v}, 4, Metric::l2).empty());

  // Ten 2-D points; four planted at distance < 1 from the query, the rest >= 5.
  std::vector<std::vector<float>> pts;
  std::vector<ChunkPtr> toy;
  for (int i = 0; i < 10; ++i) {
    bool near = i % 3 == 0;
    float r = near ? 0.1f * (i + 1) : 5.0f + i;
    pts.push_back({r, 0.0f});
    toy.push_back(make_chunk("p" + std::to_string(i), "p\n"));
  }
  auto planted = DenseIndex::from_vectors("toy2d", toy, pts);
  auto top = ids_of(planted.query({"toy2d", {0.0f, 0.0f}}, 4, Metric::l2));
  CHECK(std::set<std::string>(top.begin(), top.end()) == std::set<std::string>{"p0", "p3", "p6", "p9"});
  CHECK_THROWS_AS(planted.query({"toy2d", {0.0f, 0.0f, 0.0f}}, 4, Metric::l2), RetrievalError);
  CHECK_THROWS_AS(DenseIndex::from_vectors("bad", {toy[0], toy[1]}, {{1.0f, 2.0f}, {1.0f}}), RetrievalError);
}

TEST_CASE("dense index persistence keeps embedders apart") {
  testing::ScratchDir dir;
  std::vector<ChunkPtr> chunks{make_chunk("a", "alpha\n"), make_chunk("b", "beta\n")};
  TableEmbedder e1("toy-x", {{"alpha\n", {1.0f, 0.0f}}, {"beta\n", {0.0f, 1.0f}}});
  TableEmbedder e2("toy-y", {{"alpha\n", {0.0f, 1.0f}}, {"beta\n", {1.0f, 0.0f}}});
  auto i1 = DenseIndex::build(chunks, e1);
  auto i2 = DenseIndex::build(chunks, e2);
  auto d1 = dir / dense_index_dirname(e1.id());
  auto d2 = dir / dense_index_dirname(e2.id());
  CHECK(d1 != d2);
  i1.save(d1, {});
  i2.save(d2, {});
  CHECK(std::filesystem::file_size(d1 / "vectors.f32") == 2 * 2 * 4);
  auto r1 = DenseIndex::load(d1, chunks);
  CHECK(r1.embedder_id() == "toy-x");
  CHECK(ids_of(r1.query({"toy-x", {1.0f, 0.0f}}, 1, Metric::cosine)) == std::vector<std::string>{"a"});
  auto r2 = DenseIndex::load(d2, chunks);
  CHECK(ids_of(r2.query({"toy-y", {1.0f, 0.0f}}, 1, Metric::cosine)) == std::vector<std::string>{"b"});
  CHECK_THROWS_AS(r1.query({"toy-y", {1.0f, 0.0f}}, 1, Metric::cosine), RetrievalError);
  CHECK_THROWS_AS(DenseIndex::load(d1, {chunks[0]}), RetrievalError);
}

TEST_CASE("bm25 matches the hand-computed single-document score") {
  auto index = Bm25Index::build({make_chunk("only", "quantum circuit depth")});
  auto hits = index.query("circuit", 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].score == doctest::Approx(std::log(1.0 + 0.5 / 1.5)).epsilon(1e-12));
  CHECK(hits[0].score == doctest::Approx(0.2877).epsilon(1e-4));
  CHECK(index.query("transpiler", 5).empty());
  CHECK_THROWS_AS(Bm25Index::build({}), RetrievalError);
}

TEST_CASE("bm25 ranking follows the reference formula") {
  std::vector<ChunkPtr> docs{make_chunk("a", "from qiskit import QuantumCircuit\nqc = QuantumCircuit(2)\n"),
                             make_chunk("b", "the transpiler maps gates to hardware\n"),
                             make_chunk("c", "a circuit diagram shows quantum gates\n")};
  auto index = Bm25Index::build(docs);
  auto hits = index.query("QuantumCircuit", 10);
  REQUIRE(!hits.empty());
  CHECK(hits[0].chunk->chunk_id == "a");
  auto oracle = bm25_oracle(docs, "QuantumCircuit");
  for (const auto& h : hits) CHECK(h.score == doctest::Approx(oracle[h.chunk->chunk_id]).epsilon(1e-12));
  // k larger than the matching set returns only matching documents.
  for (const auto& h : hits) CHECK(oracle[h.chunk->chunk_id] > 0.0);

  auto tf = Bm25Index::build({make_chunk("x", "gate gate"), make_chunk("y", "gate other")});
  auto r = tf.query("gate", 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].chunk->chunk_id == "x");
  CHECK(r[0].score > r[1].score);
}

TEST_CASE("bm25 agrees with the oracle on random corpora and persists") {
  std::mt19937 rng(11);
  const std::vector<std::string> vocab{"qubit", "gate", "circuit", "measure", "hadamard", "cnot",
                                       "backend", "shots", "sampler", "estimator", "QuantumCircuit",
                                       "transpile", "layout", "noise", "pauli"};
  testing::ScratchDir dir;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ChunkPtr> docs;
    std::size_t n = 1 + rng() % 25;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      std::size_t len = 1 + rng() % 30;
      for (std::size_t w = 0; w < len; ++w) text += vocab[rng() % vocab.size()] + " ";
      docs.push_back(make_chunk("doc" + std::to_string(i), text));
    }
    std::string query = vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()];
    auto index = Bm25Index::build(docs);
    auto oracle = bm25_oracle(docs, query);
    auto hits = index.query(query, n);
    std::size_t positive = 0;
    for (auto& [id, s] : oracle) positive += s > 0 ? 1 : 0;
    CHECK(hits.size() == positive);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(hits[i].score == doctest::Approx(oracle[hits[i].chunk->chunk_id]).epsilon(1e-12));
      if (i > 0) CHECK(ranks_before(hits[i - 1], hits[i]));
    }
    index.save(dir / "bm25.jsonl");
    auto loaded = Bm25Index::load(dir / "bm25.jsonl", docs);
    auto again = loaded.query(query, n);
    REQUIRE(again.size() == hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(again[i].chunk->chunk_id == hits[i].chunk->chunk_id);
      CHECK(again[i].score == hits[i].score);
    }
  }
}

TEST_CASE("fusion arithmetic and degeneration") {
  auto A = make_chunk("A", "a\n");
  auto B = make_chunk("B", "b\n");
  {
    std::vector<ScoredChunk> dense{{A, 1.0, "dense"}, {B, 0.5, "dense"}};
    std::vector<ScoredChunk> sparse{{B, 1.0, "bm25"}, {A, 0.0, "bm25"}};
    auto fused = fuse_scores(dense, sparse, 2.0, 1.0, 10);
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].score == doctest::Approx(2.0));
    CHECK(fused[1].score == doctest::Approx(2.0));
    CHECK(fused[0].chunk->chunk_id == "A");  // tie broken by chunk_id
  }
  {
    std::vector<ScoredChunk> dense{{A, 1.0, "dense"}, {B, 0.0, "dense"}};
    std::vector<ScoredChunk> sparse{{B, 1.0, "bm25"}, {A, 0.0, "bm25"}};
    auto fused = fuse_scores(dense, sparse, 2.0, 1.0, 10);
    CHECK(fused[0].chunk->chunk_id == "A");
    CHECK(fused[0].score == doctest::Approx(2.0));
    CHECK(fused[1].score == doctest::Approx(1.0));
  }
  CHECK(fuse_scores({}, {}, 2.0, 1.0, 4).empty());
  CHECK_THROWS_AS(fuse_scores({}, {}, 0.0, 0.0, 4), std::invalid_argument);
  CHECK(normalize_scores(std::vector<double>{3.0, 3.0}) == std::vector<double>{1.0, 1.0});

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredChunk> dense, sparse;
    for (int i = 0; i < 12; ++i) {
      auto c = make_chunk("c" + std::to_string(i), "x\n");
      if (rng() % 3) dense.push_back({c, u(rng), "dense"});
      if (rng() % 3) sparse.push_back({c, std::abs(u(rng)), "bm25"});
    }
    sort_ranked(dense);
    sort_ranked(sparse);
    std::size_t k = 1 + rng() % 12;
    auto only_dense = fuse_scores(dense, sparse, 2.0, 0.0, k);
    auto want_d = ids_of(dense);
    want_d.resize(std::min(k, want_d.size()));
    CHECK(ids_of(only_dense) == want_d);
    auto only_sparse = fuse_scores(dense, sparse, 0.0, 1.0, k);
    auto want_s = ids_of(sparse);
    want_s.resize(std::min(k, want_s.size()));
    CHECK(ids_of(only_sparse) == want_s);
  }
}

TEST_CASE("rerank keeps membership and applies the scorer") {
  auto one = std::vector<ScoredChunk>{{make_chunk("solo", "x\n"), 0.3, "dense"}};
  auto same = rerank("q", one, FailingScorer(), "cross_rerank");
  CHECK(same.size() == 1);
  CHECK(same[0].score == 0.3);

  std::string query = "qubit gate circuit measure backend";
  std::vector<ScoredChunk> cands{{make_chunk("one", "qubit only here\n"), 9.0, "dense"},
                                 {make_chunk("five", "qubit gate circuit measure backend all\n"), 1.0, "dense"}};
  auto lexical = LexicalOverlapScorer().score(query, cands);
  CHECK(lexical == std::vector<double>{1.0, 5.0});
  auto out = rerank(query, cands, LexicalOverlapScorer(), "cross_rerank");
  CHECK(ids_of(out) == std::vector<std::string>{"five", "one"});
  CHECK(out[0].stage == "cross_rerank");

  try {
    rerank(query, cands, FailingScorer(), "cross_rerank");
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "cross_rerank");
  }

  std::vector<ChunkPtr> chunks{make_chunk("A", "a\n"), make_chunk("B", "b\n"), make_chunk("C", "c\n")};
  auto index = DenseIndex::from_vectors("t", chunks, {{1, 0}, {0, 1}, {1, 1}});
  std::vector<ScoredChunk> pool{{chunks[0], 3, "bm25"}, {chunks[1], 2, "bm25"}, {chunks[2], 1, "bm25"}};
  auto by_cos = rerank("q", pool, VectorScorer(index, {"t", {0, 1}}, Metric::cosine), "cosine_rerank");
  CHECK(by_cos[0].chunk->chunk_id == "B");
  CHECK(by_cos.size() == 3);
}

TEST_CASE("leakage filter uses 8-token shingle Jaccard") {
  std::string solution = words("a", 0, 20);
  std::string identical = solution;
  std::string seventy = words("a", 0, 17) + words("b", 0, 2);
  std::string half = words("a", 0, 13) + words("b", 0, 7);
  std::string unrelated = words("z", 0, 20);
  CHECK(jaccard_oracle(seventy, solution) == doctest::Approx(10.0 / 15.0));
  CHECK(shingle_jaccard(seventy, solution) == doctest::Approx(jaccard_oracle(seventy, solution)));
  CHECK(shingle_jaccard(half, solution) == doctest::Approx(jaccard_oracle(half, solution)));
  CHECK(jaccard_oracle(half, solution) < 0.6);

  std::vector<ScoredChunk> list{{make_chunk("same", identical), 4, "dense"},
                                {make_chunk("seventy", seventy), 3, "dense"},
                                {make_chunk("half", half), 2, "dense"},
                                {make_chunk("other", unrelated), 1, "dense"}};
  std::vector<std::string> sols{solution};
  auto kept = leakage_filter(list, sols, 0.6);
  CHECK(ids_of(kept) == std::vector<std::string>{"half", "other"});
  CHECK(ids_of(leakage_filter(kept, sols, 0.6)) == ids_of(kept));
  CHECK_THROWS_AS(leakage_filter(list, sols, 0.0), std::invalid_argument);
}

TEST_CASE("pipeline config parsing and validation") {
  RetrievalPipelineConfig cfg;
  CHECK(cfg.depth_k == 4);
  CHECK(cfg.pool() == 16);
  CHECK_NOTHROW(cfg.validate());
  auto parsed = retrieval_config_from_json(nlohmann::json::parse(
      R"({"corpora":["docs","code"],"depth_k":10,"metric":"cosine","cascade":["bm25","dense"],"fusion":{}})"));
  CHECK(parsed.corpora.size() == 2);
  CHECK(parsed.metric == Metric::cosine);
  REQUIRE(parsed.fusion.has_value());
  CHECK(parsed.fusion->w_dense == 2.0);
  CHECK(parsed.cascade_label() == "bm25>dense");
  auto round = retrieval_config_from_json(to_json(parsed));
  CHECK(to_json(round) == to_json(parsed));

  auto fails_with = [](const char* text, const std::string& needle) {
    try {
      retrieval_config_from_json(nlohmann::json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with(R"({"depth_k":0})", "retrieval.depth_k"));
  CHECK(fails_with(R"({"cascade":["cosine_rerank"]})", "cascade"));
  CHECK(fails_with(R"({"depth_k":8,"candidate_pool":4})", "candidate_pool"));
  CHECK(fails_with(R"({"fusion":{"w_dense":0,"w_sparse":0}})", "fusion"));
  CHECK(fails_with(R"({"corpora":["web"]})", "retrieval.corpora"));
  CHECK(fails_with(R"({"deepth":3})", "retrieval.deepth"));
}

TEST_CASE("retrieve_context runs the cascade left to right") {
  const std::string query = "prepare bell state";
  // q = (1,0). L2 pool of 2 is {B, C}; cosine then prefers C. A has cosine 1
  // but is far in L2, so it never enters the pool.
  std::map<std::string, std::vector<float>> table{{query, {1.0f, 0.0f}},
                                                  {"A bell\n", {5.0f, 0.0f}},
                                                  {"B bell state state\n", {0.9f, 0.2f}},
                                                  {"C other\n", {2.0f, 0.0f}},
                                                  {"D bell state prepare\n", {0.0f, 3.0f}}};
  auto embedder = std::make_shared<TableEmbedder>("table", table);
  std::vector<ChunkPtr> chunks;
  for (const auto& [text, _] : table) {
    if (text != query) chunks.push_back(make_chunk(std::string(1, text[0]), text));
  }
  auto corpus = CorpusIndex::build(Corpus::docs, chunks, *embedder);
  std::vector<CorpusIndex> indexes{corpus};
  RetrievalEngine engine(indexes, embedder);
  auto task = task_with_solution("def unrelated():\n    return 0\n");

  RetrievalPipelineConfig cfg;
  cfg.depth_k = 2;
  cfg.candidate_pool = 2;
  cfg.cascade = {Stage::dense};
  auto plain = engine.retrieve_context(cfg, query, task);
  CHECK(plain.chunk_ids() == std::vector<std::string>{"B", "C"});

  cfg.cascade = {Stage::dense, Stage::bm25, Stage::cosine_rerank};
  auto cascaded = engine.retrieve_context(cfg, query, task);
  CHECK(cascaded.chunk_ids() == std::vector<std::string>{"C", "B"});
  CHECK(cascaded.chunks[0].stage == "cosine_rerank");

  cfg.cascade = {Stage::dense, Stage::bm25};
  auto by_bm25 = engine.retrieve_context(cfg, query, task);
  CHECK(by_bm25.chunk_ids() == std::vector<std::string>{"B", "C"});
  CHECK(by_bm25.chunks[0].stage == "bm25");

  // With fusion the sparse list can bring in D, which the dense pool missed.
  cfg.fusion = FusionWeights{1.0, 2.0};
  auto fused = engine.retrieve_context(cfg, query, task);
  CHECK(fused.chunks[0].stage == "fusion");
  auto ids = fused.chunk_ids();
  CHECK(std::find(ids.begin(), ids.end(), "D") != ids.end());
}

TEST_CASE("retrieve_context filters before truncating and renders provenance") {
  gateway::FeatureHashEmbedder hash_embedder;
  auto embedder = std::make_shared<gateway::FeatureHashEmbedder>();
  std::string solution = "def bell():\n    qc = QuantumCircuit(2)\n    qc.h(0)\n    qc.cx(0, 1)\n    return qc\n";
  std::vector<ChunkPtr> chunks{make_chunk("leak", solution)};
  for (int i = 0; i < 6; ++i) {
    chunks.push_back(make_chunk("doc" + std::to_string(i),
                                "QuantumCircuit bell h cx example " + std::to_string(i) + "\n"));
  }
  std::vector<CorpusIndex> indexes{CorpusIndex::build(Corpus::docs, chunks, *embedder)};
  RetrievalEngine engine(indexes, embedder);
  auto task = task_with_solution(solution);
  RetrievalPipelineConfig cfg;
  cfg.cascade = {Stage::bm25};
  auto res = engine.retrieve_context(cfg, solution, task);
  REQUIRE(res.chunks.size() == 4);
  for (const auto& id : res.chunk_ids()) CHECK(id != "leak");
  for (std::size_t i = 1; i <= 4; ++i) {
    CHECK(res.context_block.find("[" + std::to_string(i) + "] docs: ") != std::string::npos);
  }
  CHECK(res.context_block.find("[5]") == std::string::npos);

  cfg.leakage_filter_on = false;
  auto unfiltered = engine.retrieve_context(cfg, solution, task);
  CHECK(unfiltered.chunk_ids().front() == "leak");

  cfg.context_token_cap = 1;
  auto capped = engine.retrieve_context(cfg, solution, task);
  CHECK(capped.chunks.size() == 1);

  cfg = {};
  cfg.corpora = {Corpus::code};
  CHECK_THROWS_AS(engine.retrieve_context(cfg, "q", task), MissingIndexError);
}

TEST_CASE("cross rerank failure degrades instead of failing") {
  auto embedder = std::make_shared<gateway::FeatureHashEmbedder>();
  std::vector<ChunkPtr> chunks{make_chunk("a", "qubit gate\n"), make_chunk("b", "qubit\n"),
                               make_chunk("c", "noise\n")};
  std::vector<CorpusIndex> indexes{CorpusIndex::build(Corpus::docs, chunks, *embedder)};
  RetrievalEngine engine(indexes, embedder, std::make_shared<FailingScorer>());
  RetrievalPipelineConfig cfg;
  cfg.cascade = {Stage::bm25, Stage::cross_rerank};
  auto res = engine.retrieve_context(cfg, "qubit gate", task_with_solution("pass\n"));
  CHECK(res.degraded_stages == std::vector<std::string>{"cross_rerank"});
  CHECK(res.chunk_ids() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("empty corpus yields an empty context") {
  auto embedder = std::make_shared<gateway::FeatureHashEmbedder>();
  std::vector<CorpusIndex> indexes{CorpusIndex::build(Corpus::docs, {}, *embedder)};
  RetrievalEngine engine(indexes, embedder);
  auto res = engine.retrieve_context({}, "anything", task_with_solution("pass\n"));
  CHECK(res.corpus_empty);
  CHECK(res.context_block.empty());
  CHECK(res.chunks.empty());
}

TEST_CASE("corpus indexes persist and reload") {
  testing::ScratchDir dir;
  dir.write("docs/guide.md", "# Circuits\nBuild a QuantumCircuit.\n\n# Gates\nThe h gate.\n");
  std::vector<std::filesystem::path> roots{dir / "docs"};
  auto chunks = ingest_corpus(roots, Corpus::docs, {});
  gateway::FeatureHashEmbedder embedder(64);
  auto built = CorpusIndex::build(Corpus::docs, chunks, embedder);
  save_corpus_index(dir / "index", built, {});
  auto loaded = load_corpus_index(dir / "index", Corpus::docs, embedder.id());
  REQUIRE(loaded.chunks.size() == chunks.size());
  CHECK(*loaded.chunks[1] == *chunks[1]);
  auto q = embedder.embed_one("h gate");
  CHECK(ids_of(loaded.dense.query({embedder.id(), q}, 2, Metric::cosine)) ==
        ids_of(built.dense.query({embedder.id(), q}, 2, Metric::cosine)));
  CHECK(ids_of(loaded.sparse->query("gate", 2)) == ids_of(built.sparse->query("gate", 2)));
  CHECK_THROWS_AS(load_corpus_index(dir / "index", Corpus::code, embedder.id()), MissingIndexError);
  CHECK_THROWS_AS(load_corpus_index(dir / "index", Corpus::docs, "hash-32"), MissingIndexError);
}
