#include "qeval/task.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "qeval/hash.hpp"

namespace qeval {

using nlohmann::json;

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::basic: return "basic";
    case Tier::intermediate: return "intermediate";
    case Tier::advanced: return "advanced";
  }
  return "basic";
}

std::optional<Tier> parse_tier(std::string_view text) {
  for (Tier t : kAllTiers) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

bool is_identifier(std::string_view text) {
  if (text.empty()) return false;
  auto head = static_cast<unsigned char>(text.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  for (unsigned char c : text) {
    if (!(std::isalnum(c) || c == '_')) return false;
  }
  return true;
}

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool contains_word(std::string_view text, std::string_view word) {
  for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    bool left = pos == 0 || !is_word_char(text[pos - 1]);
    bool right = pos + word.size() == text.size() || !is_word_char(text[pos + word.size()]);
    if (left && right) return true;
  }
  return false;
}

std::string required_string(const json& record, std::size_t index, const char* field) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw TaskFormatError("record " + std::to_string(index) + ": missing field '" + field + "'");
  }
  if (!it->is_string()) {
    throw TaskFormatError("record " + std::to_string(index) + ": field '" + field +
                          "' must be a string");
  }
  return it->get<std::string>();
}

BenchmarkTask task_from_record(const json& record, std::size_t index) {
  if (!record.is_object()) {
    throw TaskFormatError("record " + std::to_string(index) + ": not an object");
  }
  BenchmarkTask task;
  task.task_id = required_string(record, index, "task_id");
  task.prompt = required_string(record, index, "prompt");
  task.canonical_solution = required_string(record, index, "canonical_solution");
  task.test = required_string(record, index, "test");
  task.entry_point = required_string(record, index, "entry_point");

  // The published benchmark uses `difficulty_scale`; `difficulty` is accepted too.
  const char* tier_key =
      record.contains("difficulty") && !record.contains("difficulty_scale") ? "difficulty"
                                                                            : "difficulty_scale";
  auto tier_text = required_string(record, index, tier_key);
  auto tier = parse_tier(tier_text);
  if (!tier) {
    throw TaskFormatError("record " + std::to_string(index) + ": field '" + tier_key +
                          "' has unknown tier '" + tier_text + "'");
  }
  task.difficulty = *tier;

  if (task.task_id.empty()) {
    throw TaskFormatError("record " + std::to_string(index) + ": field 'task_id' is empty");
  }
  if (!is_identifier(task.entry_point)) {
    throw TaskFormatError("record " + std::to_string(index) +
                          ": field 'entry_point' is not a valid identifier");
  }
  if (!contains_word(task.prompt, task.entry_point)) {
    throw TaskFormatError("record " + std::to_string(index) +
                          ": field 'entry_point' does not appear in prompt");
  }
  return task;
}

}  // namespace

std::vector<BenchmarkTask> parse_tasks(std::string_view content) {
  std::vector<json> records;
  std::size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw TaskFormatError("no tasks");

  if (content[first] == '[') {
    json array;
    try {
      array = json::parse(content);
    } catch (const json::parse_error& e) {
      throw TaskFormatError(std::string("malformed task array: ") + e.what());
    }
    for (auto& r : array) records.push_back(std::move(r));
  } else {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= content.size()) {
      std::size_t end = content.find('\n', pos);
      if (end == std::string_view::npos) end = content.size();
      std::string_view line = content.substr(pos, end - pos);
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
        try {
          records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
          throw TaskFormatError("record " + std::to_string(records.size()) + " (line " +
                                std::to_string(line_no) + "): malformed JSON: " + e.what());
        }
      }
      pos = end + 1;
    }
  }
  if (records.empty()) throw TaskFormatError("no tasks");

  std::vector<BenchmarkTask> tasks;
  tasks.reserve(records.size());
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto task = task_from_record(records[i], i);
    if (!seen.insert(task.task_id).second) {
      throw TaskFormatError("record " + std::to_string(i) + ": duplicate task_id '" +
                            task.task_id + "'");
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<BenchmarkTask> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TaskFormatError("cannot read task file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tasks(buf.str());
}

json to_json(const BenchmarkTask& task) {
  json j;
  j["task_id"] = task.task_id;
  j["prompt"] = task.prompt;
  j["canonical_solution"] = task.canonical_solution;
  j["test"] = task.test;
  j["entry_point"] = task.entry_point;
  j["difficulty_scale"] = std::string(to_string(task.difficulty));
  return j;
}

void save_tasks(const std::filesystem::path& path, std::span<const BenchmarkTask> tasks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TaskFormatError("cannot write task file: " + path.string());
  for (const auto& t : tasks) out << to_json(t).dump() << '\n';
}

std::string suite_hash(std::span<const BenchmarkTask> tasks) {
  std::string canonical;
  for (const auto& t : tasks) {
    canonical += to_json(t).dump();
    canonical += '\n';
  }
  return sha256_hex(canonical);
}

}  // namespace qeval
