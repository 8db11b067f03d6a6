#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qeval::retrieval {

enum class Corpus { docs, code };

std::string_view to_string(Corpus corpus);
std::optional<Corpus> parse_corpus(std::string_view text);

/// A retrievable unit. Lines are 1-based and inclusive; `text` holds exactly
/// line_end - line_start + 1 newline-terminated lines.
struct Chunk {
  std::string chunk_id;
  Corpus corpus = Corpus::docs;
  std::string source_path;
  int line_start = 1;
  int line_end = 1;
  std::string text;
  long long token_estimate = 0;

  bool operator==(const Chunk&) const = default;
};

using ChunkPtr = std::shared_ptr<const Chunk>;

struct ScoredChunk {
  ChunkPtr chunk;
  double score = 0.0;
  std::string stage;
};

/// Ranking order used everywhere: score descending, then chunk_id ascending.
bool ranks_before(const ScoredChunk& a, const ScoredChunk& b);
void sort_ranked(std::vector<ScoredChunk>& list);

class RetrievalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

void save_chunks(const std::filesystem::path& path, std::span<const ChunkPtr> chunks);
std::vector<ChunkPtr> load_chunks(const std::filesystem::path& path);

}  // namespace qeval::retrieval
