#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qeval {

/// Single-line JSON; invalid UTF-8 in strings is replaced rather than thrown on.
inline std::string dump_compact(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

/// Parses every non-blank line. Throws std::runtime_error with the line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Returns `text` advanced past any leading UTF-8 continuation bytes.
std::string utf8_clean_head(std::string text);

}  // namespace qeval
