#include "qeval/retrieval/chunk.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "qeval/jsonl.hpp"

namespace qeval::retrieval {

using nlohmann::json;

std::string_view to_string(Corpus corpus) {
  return corpus == Corpus::code ? "code" : "docs";
}

std::optional<Corpus> parse_corpus(std::string_view text) {
  if (text == "docs") return Corpus::docs;
  if (text == "code") return Corpus::code;
  return std::nullopt;
}

bool ranks_before(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk->chunk_id < b.chunk->chunk_id;
}

void sort_ranked(std::vector<ScoredChunk>& list) {
  std::sort(list.begin(), list.end(), ranks_before);
}

json to_json(const Chunk& chunk) {
  return json{{"chunk_id", chunk.chunk_id},
              {"corpus", std::string(to_string(chunk.corpus))},
              {"source_path", chunk.source_path},
              {"line_start", chunk.line_start},
              {"line_end", chunk.line_end},
              {"text", chunk.text},
              {"token_estimate", chunk.token_estimate}};
}

Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  auto corpus = parse_corpus(j.at("corpus").get<std::string>());
  if (!corpus) throw RetrievalError("chunk " + c.chunk_id + ": unknown corpus");
  c.corpus = *corpus;
  c.source_path = j.at("source_path").get<std::string>();
  c.line_start = j.at("line_start").get<int>();
  c.line_end = j.at("line_end").get<int>();
  c.text = j.at("text").get<std::string>();
  c.token_estimate = j.at("token_estimate").get<long long>();
  return c;
}

void save_chunks(const std::filesystem::path& path, std::span<const ChunkPtr> chunks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RetrievalError("cannot write chunk store: " + path.string());
  for (const auto& c : chunks) out << dump_compact(to_json(*c)) << '\n';
  if (!out) throw RetrievalError("write failed: " + path.string());
}

std::vector<ChunkPtr> load_chunks(const std::filesystem::path& path) {
  std::vector<ChunkPtr> chunks;
  try {
    for (const auto& j : read_jsonl(path)) {
      chunks.push_back(std::make_shared<const Chunk>(chunk_from_json(j)));
    }
  } catch (const json::exception& e) {
    throw RetrievalError("corrupt chunk store " + path.string() + ": " + e.what());
  }
  return chunks;
}

}  // namespace qeval::retrieval
