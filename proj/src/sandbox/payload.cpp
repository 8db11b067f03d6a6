#include <algorithm>
#include <regex>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeval/sandbox.hpp"

namespace qeval {

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return lines;
}

std::size_t indent_of(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

bool is_blank(std::string_view line) { return indent_of(line) == line.size(); }

bool is_fence(std::string_view line) {
  auto trimmed = line.substr(indent_of(line));
  return trimmed.starts_with("```");
}

std::regex def_pattern(std::string_view entry_point) {
  // entry_point is a validated identifier, so it needs no escaping.
  return std::regex("^[ \\t]*(async[ \\t]+)?def[ \\t]+" + std::string(entry_point) + "[ \\t]*\\(");
}

int count_triple_quotes(std::string_view line) {
  int n = 0;
  for (std::string_view q : {std::string_view("\"\"\""), std::string_view("'''")}) {
    for (std::size_t p = line.find(q); p != std::string_view::npos; p = line.find(q, p + 3)) ++n;
  }
  return n;
}

}  // namespace

nlohmann::json to_json(const Payload& p) {
  return {{"prompt", p.prompt}, {"candidate", p.candidate}, {"test", p.test},
          {"entry_point", p.entry_point}};
}

bool defines_function(std::string_view source, std::string_view entry_point) {
  if (!is_identifier(entry_point)) return false;
  auto pattern = def_pattern(entry_point);
  for (const auto& line : split_lines(source)) {
    if (std::regex_search(line, pattern)) return true;
  }
  return false;
}

std::string strip_code_fences(std::string_view text, std::string_view entry_point) {
  auto lines = split_lines(text);
  std::vector<std::string> blocks;
  std::string current;
  bool inside = false;
  for (const auto& line : lines) {
    if (is_fence(line)) {
      if (inside) blocks.push_back(std::move(current));
      current.clear();
      inside = !inside;
      continue;
    }
    if (inside) {
      current += line;
      current += '\n';
    }
  }
  if (inside) blocks.push_back(std::move(current));  // unterminated fence
  if (blocks.empty()) return std::string(text);
  for (const auto& b : blocks) {
    if (defines_function(b, entry_point)) return b;
  }
  return blocks.front();
}

std::string remove_function_stub(std::string_view prompt, std::string_view entry_point) {
  auto lines = split_lines(prompt);
  auto pattern = def_pattern(entry_point);
  std::size_t def_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (std::regex_search(lines[i], pattern)) {
      def_line = i;
      break;
    }
  }
  if (def_line == lines.size()) return std::string(prompt);

  const std::size_t base_indent = indent_of(lines[def_line]);
  // Signature may span lines; it ends where parentheses balance.
  std::size_t i = def_line;
  int depth = 0;
  for (; i < lines.size(); ++i) {
    for (char c : lines[i]) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') --depth;
    }
    if (depth <= 0) break;
  }
  std::size_t end = i + 1;
  bool in_string = false;
  for (std::size_t j = end; j < lines.size(); ++j) {
    const auto& line = lines[j];
    bool body = in_string || is_blank(line) || indent_of(line) > base_indent;
    if (!body) break;
    if (count_triple_quotes(line) % 2 == 1) in_string = !in_string;
    if (!is_blank(line) || in_string) end = j + 1;
  }

  std::string out;
  for (std::size_t j = 0; j < lines.size(); ++j) {
    if (j >= def_line && j < end) continue;
    out += lines[j];
    out += '\n';
  }
  return out;
}

Payload assemble_payload(const BenchmarkTask& task, std::string_view candidate) {
  Payload p;
  p.test = task.test;
  p.entry_point = task.entry_point;
  std::string code = strip_code_fences(candidate, task.entry_point);

  if (defines_function(code, task.entry_point)) {
    p.prompt = remove_function_stub(task.prompt, task.entry_point);
  } else {
    p.prompt = task.prompt;
    auto lines = split_lines(code);
    auto first = std::find_if(lines.begin(), lines.end(),
                              [](const std::string& l) { return !is_blank(l); });
    if (first != lines.end() && indent_of(*first) == 0) {
      std::string indented;
      for (const auto& l : lines) {
        indented += is_blank(l) ? l : "    " + l;
        indented += '\n';
      }
      code = std::move(indented);
    }
  }
  if (!p.prompt.empty() && p.prompt.back() != '\n') p.prompt += '\n';
  if (!code.empty() && code.back() != '\n') code += '\n';
  p.candidate = std::move(code);
  return p;
}

}  // namespace qeval
