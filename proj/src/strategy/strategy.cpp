#include "qeval/strategy.hpp"

#include <chrono>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qeval/hash.hpp"
#include "qeval/jsonl.hpp"

namespace qeval {

using nlohmann::json;

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::zero_shot: return "zero_shot";
    case Strategy::rag: return "rag";
    case Strategy::agent: return "agent";
  }
  return "zero_shot";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  for (Strategy s : {Strategy::zero_shot, Strategy::rag, Strategy::agent}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void AgentConfig::validate() const {
  if (max_repairs < 0 || max_repairs > 5) {
    throw std::invalid_argument("agent.max_repairs: must be in [0, 5]");
  }
  if (generator_model.empty()) throw std::invalid_argument("agent.generator_model: must not be empty");
  if (retrieval) retrieval->validate();
  sandbox.validate();
}

std::string strategy_label(Strategy strategy, const AgentConfig& cfg) {
  switch (strategy) {
    case Strategy::zero_shot: return "zero_shot";
    case Strategy::rag: return "rag";
    case Strategy::agent: {
      std::string label = "agent(" + std::to_string(cfg.max_repairs) + ")";
      return cfg.retrieval ? "rag+" + label : label;
    }
  }
  return "zero_shot";
}

std::string model_label(Strategy strategy, const AgentConfig& cfg) {
  if (strategy == Strategy::agent && cfg.effective_repair_model() != cfg.generator_model) {
    return cfg.generator_model + "+" + cfg.effective_repair_model();
  }
  return cfg.generator_model;
}

std::string initial_prompt(const BenchmarkTask& task, std::string_view context_block) {
  std::string text;
  if (!context_block.empty()) {
    text += context_block;
    text += "\n";
  }
  text +=
      "Complete the following Python function. Reply with the complete function "
      "definition, including any imports it needs, in a single Python code block.\n\n";
  text += task.prompt;
  return text;
}

std::string repair_prompt(std::string_view feedback) {
  return "Your previous solution failed with: " + std::string(feedback) +
         ". Provide a corrected solution.";
}

std::string hash_messages(const std::vector<gateway::Message>& messages) {
  json list = json::array();
  for (const auto& m : messages) list.push_back({{"role", m.role}, {"content", m.content}});
  return sha256_hex(dump_compact(list));
}

StrategyRunner::StrategyRunner(gateway::Gateway& gateway, SandboxPool& sandbox,
                               const retrieval::RetrievalEngine* engine)
    : gateway_(&gateway), sandbox_(&sandbox), engine_(engine) {}

RunRecord StrategyRunner::run_zero_shot(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index) {
  if (cfg.retrieval) throw std::invalid_argument("zero_shot: retrieval must not be configured");
  return execute_loop(Strategy::zero_shot, task, cfg, 0, sample_index);
}

RunRecord StrategyRunner::run_rag(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index) {
  if (!cfg.retrieval) throw std::invalid_argument("rag: retrieval must be configured");
  return execute_loop(Strategy::rag, task, cfg, 0, sample_index);
}

RunRecord StrategyRunner::run_agent(const BenchmarkTask& task, const AgentConfig& cfg, int sample_index) {
  if (cfg.max_repairs < 1 || cfg.max_repairs > 5) {
    throw std::invalid_argument("agent: max_repairs must be in [1, 5]");
  }
  return execute_loop(Strategy::agent, task, cfg, cfg.max_repairs, sample_index);
}

RunRecord StrategyRunner::run(Strategy strategy, const BenchmarkTask& task, const AgentConfig& cfg,
                              int sample_index) {
  switch (strategy) {
    case Strategy::zero_shot: return run_zero_shot(task, cfg, sample_index);
    case Strategy::rag: return run_rag(task, cfg, sample_index);
    case Strategy::agent: return run_agent(task, cfg, sample_index);
  }
  throw std::invalid_argument("unknown strategy");
}

RunRecord StrategyRunner::execute_loop(Strategy strategy, const BenchmarkTask& task,
                                       const AgentConfig& cfg, int max_repairs, int sample_index) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();

  RunRecord record;
  record.task_id = task.task_id;
  record.difficulty = task.difficulty;
  record.strategy = strategy_label(strategy, cfg);
  record.model = model_label(strategy, cfg);
  record.sample_index = sample_index;

  auto finish = [&](ExecStatus status) {
    record.final_status = status;
    record.executions_count = static_cast<int>(record.attempts.size());
    record.wall_time_total = std::chrono::duration<double>(clock::now() - started).count();
    return record;
  };

  // Retrieved once per task; repairs keep the same context.
  std::string context_block;
  if (cfg.retrieval) {
    if (!engine_) throw retrieval::MissingIndexError("retrieval configured but no index loaded; run `qeval index` first");
    try {
      auto found = engine_->retrieve_context(*cfg.retrieval, task.prompt, task);
      context_block = found.context_block;
      record.retrieval_chunk_ids = found.chunk_ids();
      record.retrieval_context_empty = context_block.empty();
      record.retrieval_degraded_stages = found.degraded_stages;
    } catch (const retrieval::MissingIndexError&) {
      throw;
    } catch (const std::exception& e) {
      record.harness_note = std::string("retrieval failed: ") + e.what();
      return finish(ExecStatus::harness_error);
    }
  }

  std::vector<gateway::Message> messages{{"user", initial_prompt(task, context_block)}};
  for (int attempt = 0; attempt <= max_repairs; ++attempt) {
    gateway::GenerationRequest request;
    request.model_id = attempt == 0 ? cfg.generator_model : cfg.effective_repair_model();
    request.messages = messages;
    request.temperature = cfg.generation.temperature;
    request.max_output_tokens = cfg.generation.max_output_tokens;
    request.reasoning_effort = cfg.generation.reasoning_effort;
    request.verbosity = cfg.generation.verbosity;
    request.context = {task.task_id, attempt};

    gateway::Generation generation;
    try {
      generation = gateway_->generate(request);
    } catch (const gateway::GatewayError& e) {
      record.harness_note = "generation failed at attempt " + std::to_string(attempt) + ": " + e.what();
      return finish(ExecStatus::harness_error);
    }

    Attempt a;
    a.attempt_index = attempt;
    a.model_id = request.model_id;
    a.model_version = generation.model_version_reported;
    a.prompt_hash = hash_messages(messages);
    a.completion = generation.text;
    a.generation_latency = generation.latency;
    a.tokens_in = generation.tokens_in;
    a.tokens_out = generation.tokens_out;
    a.result = sandbox_->execute(assemble_payload(task, generation.text), cfg.sandbox);
    record.tokens_total += a.tokens_in + a.tokens_out;
    ExecStatus status = a.result.status;
    std::string feedback = a.result.feedback;
    record.attempts.push_back(std::move(a));

    if (status == ExecStatus::pass) return finish(status);
    if (status == ExecStatus::harness_error) {
      record.harness_note = "sandbox fault at attempt " + std::to_string(attempt);
      return finish(status);
    }
    if (attempt == max_repairs) return finish(status);
    // Timeouts count as failed attempts; the loop continues with the timeout message.
    messages.push_back({"assistant", generation.text});
    messages.push_back({"user", repair_prompt(feedback)});
  }
  return finish(ExecStatus::harness_error);  // not reached
}

}  // namespace qeval
