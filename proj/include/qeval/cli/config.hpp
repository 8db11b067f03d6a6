#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/gateway/gateway.hpp"
#include "qeval/retrieval/ingest.hpp"
#include "qeval/retrieval/pipeline.hpp"
#include "qeval/strategy.hpp"

namespace qeval::cli {

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusConfig {
  std::map<retrieval::Corpus, std::vector<std::filesystem::path>> roots;
  retrieval::ChunkingParams chunking;
};

struct GatewayConfig {
  std::filesystem::path mock_script;  // empty: mock answers with an empty completion
  std::filesystem::path call_log;
  int max_concurrent_per_provider = 4;
  gateway::RetryPolicy retry;
};

struct RunConfig {
  std::filesystem::path suite_path;
  Strategy strategy = Strategy::zero_shot;
  AgentConfig agent;  // agent.retrieval is set for rag (and optionally agent)
  std::filesystem::path output_path = "results.jsonl";
  int repeats = 1;
  bool resume = false;
  std::size_t concurrency = 1;
  int samples_per_task = 1;

  std::filesystem::path index_dir = "index";
  std::string embedder = "hash-256";
  std::string cross_encoder;  // empty: deterministic lexical-overlap scorer
  CorpusConfig corpus;
  GatewayConfig gateway;

  /// Relative paths in the file are resolved against this directory.
  std::filesystem::path base_dir = ".";

  /// Cross-field invariants; throws ConfigError.
  void validate() const;
};

/// Parses a config object. Unknown keys and wrong types are reported with
/// their dotted path, e.g. "agent.max_repairs: must be in [0, 5]".
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON of the settings that determine results. Output location,
/// resume, repeat count and concurrency are excluded so repeats share a hash.
nlohmann::json canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// Output path for repeat `index` (0-based): unchanged when repeats == 1,
/// otherwise "<stem>.r<index+1><ext>".
std::filesystem::path repeat_output_path(const RunConfig& cfg, int index);

nlohmann::json to_json(const SandboxConfig& cfg);
SandboxConfig sandbox_config_from_json(const nlohmann::json& j, const std::string& where = "sandbox");

}  // namespace qeval::cli
