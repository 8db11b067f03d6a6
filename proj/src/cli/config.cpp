#include "qeval/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qeval/hash.hpp"
#include "qeval/jsonl.hpp"

namespace qeval::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::vector<std::string>>) return "a list of strings";
  else return "an object";
}

template <typename T>
bool has_type(const json& v) {
  if constexpr (std::is_same_v<T, std::string>) return v.is_string();
  else if constexpr (std::is_same_v<T, bool>) return v.is_boolean();
  else if constexpr (std::is_integral_v<T>) return v.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) return v.is_number();
  else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!e.is_string()) return false;
    }
    return true;
  } else {
    return v.is_object();
  }
}

// An object at a dotted path whose keys are checked against a known set.
class Section {
 public:
  Section(const json& j, std::string where, std::set<std::string> known) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    for (const auto& [key, _] : j.items()) {
      if (!known.count(key)) throw ConfigError(path(key) + ": unknown field");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  template <typename T>
  std::optional<T> get(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    const json& v = j_.at(key);
    if (!has_type<T>(v)) throw ConfigError(path(key) + ": expected " + type_name<T>());
    return v.get<T>();
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (auto v = get<T>(key)) out = *v;
  }

 private:
  const json& j_;
  std::string where_;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "unreadable";
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace

json to_json(const SandboxConfig& cfg) {
  return json{{"timeout_seconds", cfg.timeout_seconds},
              {"feedback_limit", cfg.feedback_limit},
              {"interpreter_command", cfg.interpreter_command},
              {"workdir", cfg.workdir.string()},
              {"env_allowlist", cfg.env_allowlist}};
}

SandboxConfig sandbox_config_from_json(const json& j, const std::string& where) {
  Section s(j, where, {"timeout_seconds", "feedback_limit", "interpreter_command", "workdir", "env_allowlist"});
  SandboxConfig cfg;
  s.read("timeout_seconds", cfg.timeout_seconds);
  if (auto v = s.get<long long>("feedback_limit")) {
    if (*v < 1) throw ConfigError(s.path("feedback_limit") + ": must be at least 1");
    cfg.feedback_limit = static_cast<std::size_t>(*v);
  }
  s.read("interpreter_command", cfg.interpreter_command);
  if (auto v = s.get<std::string>("workdir")) cfg.workdir = *v;
  s.read("env_allowlist", cfg.env_allowlist);
  if (!(cfg.timeout_seconds > 0.0)) throw ConfigError(s.path("timeout_seconds") + ": must be > 0");
  return cfg;
}

void RunConfig::validate() const {
  if (suite_path.empty()) throw ConfigError("suite_path: required");
  if (repeats < 1) throw ConfigError("repeats: must be at least 1");
  if (concurrency < 1) throw ConfigError("concurrency: must be at least 1");
  if (samples_per_task < 1) throw ConfigError("samples_per_task: must be at least 1");
  if (agent.max_repairs < 0 || agent.max_repairs > 5) throw ConfigError("agent.max_repairs: must be in [0, 5]");
  if (agent.generator_model.empty()) throw ConfigError("agent.generator_model: must not be empty");
  switch (strategy) {
    case Strategy::zero_shot:
      if (agent.max_repairs != 0) throw ConfigError("agent.max_repairs: must be 0 for strategy zero_shot");
      if (agent.retrieval) throw ConfigError("retrieval: not used by strategy zero_shot; remove it or use rag");
      break;
    case Strategy::rag:
      if (agent.max_repairs != 0) throw ConfigError("agent.max_repairs: must be 0 for strategy rag");
      if (!agent.retrieval) throw ConfigError("retrieval: required for strategy rag");
      break;
    case Strategy::agent:
      if (agent.max_repairs < 1) throw ConfigError("agent.max_repairs: must be in [1, 5] for strategy agent");
      break;
  }
  if (agent.sandbox.interpreter_command.empty()) {
    throw ConfigError("sandbox.interpreter_command: required (interpreter and runner shim)");
  }
  try {
    agent.sandbox.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    corpus.chunking.validate();
  } catch (const retrieval::RetrievalError& e) {
    throw ConfigError(std::string("corpus.chunking: ") + e.what());
  }
  if (embedder.empty()) throw ConfigError("embedder: must not be empty");
  if (gateway.max_concurrent_per_provider < 1) {
    throw ConfigError("gateway.max_concurrent_per_provider: must be at least 1");
  }
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  Section top(j, "", {"suite_path", "strategy", "agent", "retrieval", "sandbox", "output_path", "repeats",
                      "resume", "concurrency", "samples_per_task", "index_dir", "embedder", "cross_encoder",
                      "corpus", "gateway"});
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.output_path = resolve(base_dir, cfg.output_path);
  cfg.index_dir = resolve(base_dir, cfg.index_dir);
  if (auto v = top.get<std::string>("suite_path")) cfg.suite_path = resolve(base_dir, *v);
  if (auto v = top.get<std::string>("strategy")) {
    auto s = parse_strategy(*v);
    if (!s) throw ConfigError("strategy: unknown strategy '" + *v + "' (expected zero_shot, rag or agent)");
    cfg.strategy = *s;
  }
  if (auto v = top.get<std::string>("output_path")) cfg.output_path = resolve(base_dir, *v);
  top.read("repeats", cfg.repeats);
  top.read("resume", cfg.resume);
  if (auto v = top.get<long long>("concurrency")) {
    if (*v < 1) throw ConfigError("concurrency: must be at least 1");
    cfg.concurrency = static_cast<std::size_t>(*v);
  }
  top.read("samples_per_task", cfg.samples_per_task);
  if (auto v = top.get<std::string>("index_dir")) cfg.index_dir = resolve(base_dir, *v);
  top.read("embedder", cfg.embedder);
  top.read("cross_encoder", cfg.cross_encoder);

  if (top.has("agent")) {
    Section a(top.raw("agent"), "agent", {"max_repairs", "generator_model", "repair_model", "generation"});
    a.read("max_repairs", cfg.agent.max_repairs);
    a.read("generator_model", cfg.agent.generator_model);
    a.read("repair_model", cfg.agent.repair_model);
    if (a.has("generation")) {
      Section g(a.raw("generation"), "agent.generation",
                {"temperature", "max_output_tokens", "reasoning_effort", "verbosity"});
      g.read("temperature", cfg.agent.generation.temperature);
      if (auto v = g.get<int>("max_output_tokens")) {
        if (*v < 1) throw ConfigError("agent.generation.max_output_tokens: must be at least 1");
        cfg.agent.generation.max_output_tokens = *v;
      }
      if (auto v = g.get<std::string>("reasoning_effort")) {
        auto e = gateway::parse_reasoning_effort(*v);
        if (!e) throw ConfigError("agent.generation.reasoning_effort: unknown value '" + *v + "'");
        cfg.agent.generation.reasoning_effort = *e;
      }
      if (auto v = g.get<std::string>("verbosity")) {
        auto e = gateway::parse_verbosity(*v);
        if (!e) throw ConfigError("agent.generation.verbosity: unknown value '" + *v + "'");
        cfg.agent.generation.verbosity = *e;
      }
    }
  }
  if (top.has("retrieval")) {
    try {
      cfg.agent.retrieval = retrieval::retrieval_config_from_json(top.raw("retrieval"), "retrieval");
    } catch (const retrieval::RetrievalError& e) {
      throw ConfigError(e.what());
    }
  }
  if (top.has("sandbox")) {
    cfg.agent.sandbox = sandbox_config_from_json(top.raw("sandbox"));
    if (!cfg.agent.sandbox.workdir.empty()) cfg.agent.sandbox.workdir = resolve(base_dir, cfg.agent.sandbox.workdir);
  }
  if (top.has("corpus")) {
    Section c(top.raw("corpus"), "corpus", {"docs", "code", "chunking"});
    for (auto kind : {retrieval::Corpus::docs, retrieval::Corpus::code}) {
      std::string key(retrieval::to_string(kind));
      if (auto roots = c.get<std::vector<std::string>>(key)) {
        for (const auto& r : *roots) cfg.corpus.roots[kind].push_back(resolve(base_dir, r));
      }
    }
    if (c.has("chunking")) {
      Section ch(c.raw("chunking"), "corpus.chunking", {"max_lines", "overlap_lines"});
      ch.read("max_lines", cfg.corpus.chunking.max_lines);
      ch.read("overlap_lines", cfg.corpus.chunking.overlap_lines);
    }
  }
  if (top.has("gateway")) {
    Section g(top.raw("gateway"), "gateway", {"mock_script", "call_log", "max_concurrent_per_provider", "retry"});
    if (auto v = g.get<std::string>("mock_script")) cfg.gateway.mock_script = resolve(base_dir, *v);
    if (auto v = g.get<std::string>("call_log")) cfg.gateway.call_log = resolve(base_dir, *v);
    g.read("max_concurrent_per_provider", cfg.gateway.max_concurrent_per_provider);
    if (g.has("retry")) {
      Section r(g.raw("retry"), "gateway.retry",
                {"max_attempts", "initial_backoff_seconds", "multiplier", "max_backoff_seconds"});
      r.read("max_attempts", cfg.gateway.retry.max_attempts);
      r.read("initial_backoff_seconds", cfg.gateway.retry.initial_backoff_seconds);
      r.read("multiplier", cfg.gateway.retry.multiplier);
      r.read("max_backoff_seconds", cfg.gateway.retry.max_backoff_seconds);
      if (cfg.gateway.retry.max_attempts < 1) throw ConfigError("gateway.retry.max_attempts: must be at least 1");
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_run_config(j, base);
}

json canonical_config(const RunConfig& cfg) {
  json agent{{"max_repairs", cfg.agent.max_repairs},
             {"generator_model", cfg.agent.generator_model},
             {"repair_model", cfg.agent.effective_repair_model()}};
  json gen{{"temperature", cfg.agent.generation.temperature}};
  if (cfg.agent.generation.max_output_tokens) gen["max_output_tokens"] = *cfg.agent.generation.max_output_tokens;
  if (cfg.agent.generation.reasoning_effort) {
    gen["reasoning_effort"] = std::string(gateway::to_string(*cfg.agent.generation.reasoning_effort));
  }
  if (cfg.agent.generation.verbosity) gen["verbosity"] = std::string(gateway::to_string(*cfg.agent.generation.verbosity));
  agent["generation"] = gen;
  json sandbox{{"timeout_seconds", cfg.agent.sandbox.timeout_seconds},
               {"feedback_limit", cfg.agent.sandbox.feedback_limit},
               {"interpreter_command", cfg.agent.sandbox.interpreter_command},
               {"env_allowlist", cfg.agent.sandbox.env_allowlist}};
  json out{{"strategy", std::string(to_string(cfg.strategy))},
           {"agent", agent},
           {"sandbox", sandbox},
           {"samples_per_task", cfg.samples_per_task},
           {"retrieval", nullptr}};
  if (cfg.agent.retrieval) {
    out["retrieval"] = retrieval::to_json(*cfg.agent.retrieval);
    out["embedder"] = cfg.embedder;
    out["cross_encoder"] = cfg.cross_encoder;
    out["chunking"] = {{"max_lines", cfg.corpus.chunking.max_lines},
                       {"overlap_lines", cfg.corpus.chunking.overlap_lines}};
  }
  if (!cfg.gateway.mock_script.empty()) out["mock_script_sha256"] = file_sha256(cfg.gateway.mock_script);
  return out;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg).dump()); }

fs::path repeat_output_path(const RunConfig& cfg, int index) {
  if (cfg.repeats == 1) return cfg.output_path;
  fs::path p = cfg.output_path;
  std::string name = p.stem().string() + ".r" + std::to_string(index + 1) + p.extension().string();
  return p.parent_path() / name;
}

}  // namespace qeval::cli
