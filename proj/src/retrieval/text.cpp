#include "qeval/text.hpp"

#include <cctype>

namespace qeval {

namespace {

bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

char lower(unsigned char c) { return static_cast<char>(std::tolower(c)); }

std::string lowercase(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(lower(c));
  return out;
}

// Splits one underscore-free word at camelCase boundaries:
// "quantumCircuit" -> quantum|Circuit, "HTTPServer" -> HTTP|Server.
void split_camel(std::string_view word, std::vector<std::string>& parts) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size(); ++i) {
    auto prev = static_cast<unsigned char>(word[i - 1]);
    auto cur = static_cast<unsigned char>(word[i]);
    bool next_lower = i + 1 < word.size() && std::islower(static_cast<unsigned char>(word[i + 1]));
    bool boundary = (std::isupper(cur) && (std::islower(prev) || std::isdigit(prev))) ||
                    (std::isupper(cur) && std::isupper(prev) && next_lower);
    if (boundary) {
      parts.push_back(lowercase(word.substr(start, i - start)));
      start = i;
    }
  }
  parts.push_back(lowercase(word.substr(start)));
}

}  // namespace

std::vector<std::string> tokenize_terms(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_ident_char(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_ident_char(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view run = text.substr(i, j - i);
    i = j;

    auto first = run.find_first_not_of('_');
    if (first == std::string_view::npos) continue;
    run = run.substr(first, run.find_last_not_of('_') - first + 1);

    std::vector<std::string> parts;
    std::size_t p = 0;
    while (p < run.size()) {
      std::size_t q = run.find('_', p);
      if (q == std::string_view::npos) q = run.size();
      if (q > p) split_camel(run.substr(p, q - p), parts);
      p = q + 1;
    }
    tokens.push_back(lowercase(run));
    if (parts.size() > 1) {
      for (auto& part : parts) tokens.push_back(std::move(part));
    }
  }
  return tokens;
}

std::vector<std::string> code_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_ident_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(static_cast<unsigned char>(text[j]))) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      tokens.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return tokens;
}

long long estimate_tokens(std::string_view text) {
  return static_cast<long long>((text.size() + 3) / 4);
}

}  // namespace qeval
