#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace qeval {

/// Retrieval tokenizer shared by BM25, the lexical reranker and the hash embedder.
///
/// Lowercases and splits on characters outside [A-Za-z0-9_]. Each identifier is
/// kept whole and, when it is snake_case or camelCase, followed by its parts:
/// "QuantumCircuit" -> {"quantumcircuit", "quantum", "circuit"}.
std::vector<std::string> tokenize_terms(std::string_view text);

/// Code tokens for near-duplicate detection: identifier/number runs, and every
/// other non-whitespace character as its own token.
std::vector<std::string> code_tokens(std::string_view text);

/// Rough token count (four characters per token, rounded up).
long long estimate_tokens(std::string_view text);

}  // namespace qeval
