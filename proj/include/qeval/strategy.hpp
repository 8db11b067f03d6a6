#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qeval/gateway/gateway.hpp"
#include "qeval/retrieval/pipeline.hpp"
#include "qeval/run_record.hpp"
#include "qeval/sandbox.hpp"
#include "qeval/task.hpp"

namespace qeval {

enum class Strategy { zero_shot, rag, agent };

std::string_view to_string(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view text);

/// Request options applied to every generation of a run.
struct GenerationSettings {
  double temperature = 0.0;
  std::optional<int> max_output_tokens;
  std::optional<gateway::ReasoningEffort> reasoning_effort;
  std::optional<gateway::Verbosity> verbosity;
};

struct AgentConfig {
  int max_repairs = 0;  // 0: single pass (zero-shot or RAG)
  std::string generator_model = "mock";
  std::string repair_model;  // empty: same as generator_model
  std::optional<retrieval::RetrievalPipelineConfig> retrieval;
  SandboxConfig sandbox;
  GenerationSettings generation;

  const std::string& effective_repair_model() const {
    return repair_model.empty() ? generator_model : repair_model;
  }
  /// Throws std::invalid_argument naming the field.
  void validate() const;
};

/// "zero_shot", "rag", "agent(N)" or "rag+agent(N)".
std::string strategy_label(Strategy strategy, const AgentConfig& cfg);
/// Generator id, or "<generator>+<repairer>" when repairs use another model.
std::string model_label(Strategy strategy, const AgentConfig& cfg);

/// Text of the first user message: optional context block, then the instruction, then the prompt.
std::string initial_prompt(const BenchmarkTask& task, std::string_view context_block);
std::string repair_prompt(std::string_view feedback);

/// sha256 over the compact JSON of the message list.
std::string hash_messages(const std::vector<gateway::Message>& messages);

/// Runs single tasks. Thread-safe: one instance serves every worker.
class StrategyRunner {
 public:
  /// `engine` may be null when no run uses retrieval.
  StrategyRunner(gateway::Gateway& gateway, SandboxPool& sandbox,
                 const retrieval::RetrievalEngine* engine = nullptr);

  RunRecord run_zero_shot(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index = 0);
  RunRecord run_rag(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index = 0);
  RunRecord run_agent(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index = 0);
  RunRecord run(Strategy strategy, const BenchmarkTask& task, const AgentConfig& cfg,
                int sample_index = 0);

 private:
  RunRecord execute_loop(Strategy strategy, const BenchmarkTask& task, const AgentConfig& cfg,
                         int max_repairs, int sample_index);

  gateway::Gateway* gateway_;
  SandboxPool* sandbox_;
  const retrieval::RetrievalEngine* engine_;
};

}  // namespace qeval
