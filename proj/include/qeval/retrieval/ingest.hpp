#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qeval/retrieval/chunk.hpp"

namespace qeval::retrieval {

struct ChunkingParams {
  int max_lines = 60;
  int overlap_lines = 10;  // code windows only

  void validate() const;
};

/// Fixed line windows of `max_lines`, each starting `max_lines - overlap_lines`
/// after the previous one; the last window ends at end of file.
std::vector<Chunk> chunk_code(std::string_view content, const std::string& source_path,
                              const ChunkingParams& params, Corpus corpus = Corpus::code);

/// Sections at markdown (`#`) or underlined reStructuredText headings; sections
/// longer than `max_lines` are split at blank-line paragraph boundaries.
std::vector<Chunk> chunk_docs(std::string_view content, const std::string& source_path,
                              const ChunkingParams& params, Corpus corpus = Corpus::docs);

/// Walks each root (file or directory, sorted, hidden entries skipped) and
/// chunks every file whose extension belongs to `kind`.
/// Throws RetrievalError for a missing root or when no file matches.
std::vector<ChunkPtr> ingest_corpus(std::span<const std::filesystem::path> roots, Corpus kind,
                                    const ChunkingParams& params);

bool matches_corpus(const std::filesystem::path& file, Corpus kind);

}  // namespace qeval::retrieval
