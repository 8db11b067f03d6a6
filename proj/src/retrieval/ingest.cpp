#include "qeval/retrieval/ingest.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "qeval/text.hpp"

namespace qeval::retrieval {

namespace fs = std::filesystem;

void ChunkingParams::validate() const {
  if (max_lines < 1) throw RetrievalError("max_lines must be at least 1");
  if (overlap_lines < 0 || overlap_lines >= max_lines) {
    throw RetrievalError("overlap_lines must be in [0, max_lines)");
  }
}

namespace {

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

// `first`/`last` are 0-based inclusive line indexes.
Chunk make_chunk(const std::vector<std::string_view>& lines, std::size_t first, std::size_t last,
                 const std::string& source_path, Corpus corpus) {
  Chunk c;
  c.corpus = corpus;
  c.source_path = source_path;
  c.line_start = static_cast<int>(first) + 1;
  c.line_end = static_cast<int>(last) + 1;
  for (std::size_t i = first; i <= last; ++i) {
    c.text.append(lines[i]);
    c.text.push_back('\n');
  }
  c.token_estimate = estimate_tokens(c.text);
  c.chunk_id = std::string(to_string(corpus)) + ":" + source_path + ":" +
               std::to_string(c.line_start) + "-" + std::to_string(c.line_end);
  return c;
}

bool all_blank(const std::vector<std::string_view>& lines, std::size_t first, std::size_t last) {
  for (std::size_t i = first; i <= last; ++i) {
    if (!is_blank(lines[i])) return false;
  }
  return true;
}

bool is_rst_underline(std::string_view line, std::string_view title) {
  if (line.size() < 3 || is_blank(title)) return false;
  char c = line.front();
  if (std::string_view("=-~^*+#\"'`").find(c) == std::string_view::npos) return false;
  if (line.find_first_not_of(c) != std::string_view::npos) return false;
  return line.size() >= title.size();
}

// Pushes [first, last] with surrounding blank lines trimmed, if anything remains.
void push_trimmed(const std::vector<std::string_view>& lines, std::size_t first, std::size_t last,
                  std::vector<std::pair<std::size_t, std::size_t>>& out) {
  while (first <= last && is_blank(lines[first])) ++first;
  while (last > first && is_blank(lines[last])) --last;
  if (first <= last && !is_blank(lines[first])) out.emplace_back(first, last);
}

}  // namespace

std::vector<Chunk> chunk_code(std::string_view content, const std::string& source_path,
                              const ChunkingParams& params, Corpus corpus) {
  params.validate();
  auto lines = split_lines(content);
  std::vector<Chunk> chunks;
  if (lines.empty()) return chunks;
  const auto window = static_cast<std::size_t>(params.max_lines);
  const auto stride = static_cast<std::size_t>(params.max_lines - params.overlap_lines);
  for (std::size_t start = 0;; start += stride) {
    std::size_t last = std::min(start + window, lines.size()) - 1;
    if (!all_blank(lines, start, last)) {
      chunks.push_back(make_chunk(lines, start, last, source_path, corpus));
    }
    if (last + 1 >= lines.size()) break;
  }
  return chunks;
}

std::vector<Chunk> chunk_docs(std::string_view content, const std::string& source_path,
                              const ChunkingParams& params, Corpus corpus) {
  params.validate();
  auto lines = split_lines(content);
  std::vector<Chunk> chunks;
  if (lines.empty()) return chunks;

  // Section starts: markdown headings, and titles followed by an rst underline.
  std::vector<std::size_t> starts{0};
  bool in_fence = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (line.starts_with("```") || line.starts_with("~~~")) in_fence = !in_fence;
    if (in_fence) continue;
    bool heading = line.starts_with("#") &&
                   (line.find_first_not_of('#') == std::string_view::npos ||
                    line[line.find_first_not_of('#')] == ' ');
    if (!heading && i + 1 < lines.size()) heading = is_rst_underline(lines[i + 1], line);
    if (heading && i != 0 && i != starts.back()) starts.push_back(i);
  }
  starts.push_back(lines.size());

  const auto max_lines = static_cast<std::size_t>(params.max_lines);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
    std::size_t first = starts[s];
    std::size_t last = starts[s + 1] - 1;
    if (last - first + 1 <= max_lines) {
      push_trimmed(lines, first, last, spans);
      continue;
    }
    // Long section: greedily pack paragraphs; paragraphs over the limit are cut.
    std::size_t piece_start = first;
    std::size_t i = first;
    std::size_t last_break = first;  // index just after the latest blank line
    while (i <= last) {
      if (i - piece_start + 1 > max_lines) {
        std::size_t cut = last_break > piece_start ? last_break : i;
        push_trimmed(lines, piece_start, cut - 1, spans);
        piece_start = cut;
        last_break = cut;
        continue;
      }
      if (is_blank(lines[i])) last_break = i + 1;
      ++i;
    }
    if (piece_start <= last) push_trimmed(lines, piece_start, last, spans);
  }
  for (auto [first, last] : spans) {
    chunks.push_back(make_chunk(lines, first, last, source_path, corpus));
  }
  return chunks;
}

bool matches_corpus(const fs::path& file, Corpus kind) {
  static constexpr std::array<std::string_view, 8> code_ext{".py",  ".pyi", ".rs",  ".c",
                                                            ".cc",  ".cpp", ".h",   ".hpp"};
  static constexpr std::array<std::string_view, 5> doc_ext{".md", ".rst", ".txt", ".mdx", ".ipynb"};
  std::string ext = file.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (kind == Corpus::code) {
    return std::find(code_ext.begin(), code_ext.end(), ext) != code_ext.end();
  }
  return std::find(doc_ext.begin(), doc_ext.end(), ext) != doc_ext.end();
}

namespace {

bool hidden(const fs::path& p) {
  auto name = p.filename().string();
  return name.size() > 1 && name.front() == '.';
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RetrievalError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::vector<ChunkPtr> ingest_corpus(std::span<const fs::path> roots, Corpus kind,
                                    const ChunkingParams& params) {
  params.validate();
  if (roots.empty()) throw RetrievalError("no corpus roots given");
  // (relative source path, absolute path), sorted for a stable chunk order.
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& root : roots) {
    std::error_code ec;
    auto status = fs::status(root, ec);
    if (ec || !fs::exists(status)) throw RetrievalError("corpus root not readable: " + root.string());
    if (fs::is_regular_file(status)) {
      if (matches_corpus(root, kind)) files.emplace_back(root.filename().string(), root);
      continue;
    }
    std::string prefix = fs::absolute(root).lexically_normal().filename().string();
    if (prefix.empty()) prefix = fs::absolute(root).lexically_normal().parent_path().filename().string();
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
    if (ec) throw RetrievalError("corpus root not readable: " + root.string() + ": " + ec.message());
    for (auto end = fs::recursive_directory_iterator(); it != end; it.increment(ec)) {
      if (ec) throw RetrievalError("walking " + root.string() + ": " + ec.message());
      if (hidden(it->path())) {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      if (!it->is_regular_file() || !matches_corpus(it->path(), kind)) continue;
      auto rel = it->path().lexically_relative(root).generic_string();
      files.emplace_back(prefix + "/" + rel, it->path());
    }
  }
  if (files.empty()) {
    throw RetrievalError("no " + std::string(to_string(kind)) + " files found under the given roots");
  }
  std::sort(files.begin(), files.end());

  std::vector<ChunkPtr> out;
  for (const auto& [rel, path] : files) {
    std::string content = read_file(path);
    bool as_code = kind == Corpus::code;
    auto chunks = as_code ? chunk_code(content, rel, params, kind) : chunk_docs(content, rel, params, kind);
    for (auto& c : chunks) out.push_back(std::make_shared<const Chunk>(std::move(c)));
  }
  return out;
}

}  // namespace qeval::retrieval
