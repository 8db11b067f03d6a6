#include "qeval/run_record.hpp"

#include <nlohmann/json.hpp>

namespace qeval {

using nlohmann::json;

json to_json(const RunRecord& rec) {
  json attempts = json::array();
  for (const auto& a : rec.attempts) {
    attempts.push_back({
        {"attempt_index", a.attempt_index},
        {"model_id", a.model_id},
        {"model_version", a.model_version},
        {"prompt_hash", a.prompt_hash},
        {"completion", a.completion},
        {"result", to_json(a.result)},
        {"generation_latency", a.generation_latency},
        {"tokens_in", a.tokens_in},
        {"tokens_out", a.tokens_out},
    });
  }
  json j;
  j["kind"] = "record";
  j["task_id"] = rec.task_id;
  j["difficulty"] = std::string(to_string(rec.difficulty));
  j["strategy"] = rec.strategy;
  j["model"] = rec.model;
  j["sample_index"] = rec.sample_index;
  j["final_status"] = std::string(to_string(rec.final_status));
  j["executions_count"] = rec.executions_count;
  j["wall_time_total"] = rec.wall_time_total;
  j["tokens_total"] = rec.tokens_total;
  j["retrieval_chunk_ids"] = rec.retrieval_chunk_ids ? json(*rec.retrieval_chunk_ids) : json(nullptr);
  j["retrieval_context_empty"] = rec.retrieval_context_empty;
  j["retrieval_degraded_stages"] = rec.retrieval_degraded_stages;
  j["harness_note"] = rec.harness_note;
  j["attempts"] = std::move(attempts);
  return j;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord rec;
  rec.task_id = j.at("task_id").get<std::string>();
  if (!j.contains("difficulty") || !j["difficulty"].is_string()) {
    throw std::runtime_error("record " + rec.task_id + ": missing difficulty tier");
  }
  auto tier = parse_tier(j["difficulty"].get<std::string>());
  if (!tier) throw std::runtime_error("record " + rec.task_id + ": unknown difficulty tier");
  rec.difficulty = *tier;
  rec.strategy = j.at("strategy").get<std::string>();
  rec.model = j.value("model", "");
  rec.sample_index = j.value("sample_index", 0);
  auto status = parse_exec_status(j.at("final_status").get<std::string>());
  if (!status) throw std::runtime_error("record " + rec.task_id + ": unknown final_status");
  rec.final_status = *status;
  rec.executions_count = j.at("executions_count").get<int>();
  rec.wall_time_total = j.value("wall_time_total", 0.0);
  rec.tokens_total = j.value("tokens_total", 0LL);
  if (auto it = j.find("retrieval_chunk_ids"); it != j.end() && it->is_array()) {
    rec.retrieval_chunk_ids = it->get<std::vector<std::string>>();
  }
  rec.retrieval_context_empty = j.value("retrieval_context_empty", false);
  if (auto it = j.find("retrieval_degraded_stages"); it != j.end() && it->is_array()) {
    rec.retrieval_degraded_stages = it->get<std::vector<std::string>>();
  }
  rec.harness_note = j.value("harness_note", "");
  for (const auto& a : j.value("attempts", json::array())) {
    Attempt at;
    at.attempt_index = a.at("attempt_index").get<int>();
    at.model_id = a.value("model_id", "");
    at.model_version = a.value("model_version", "");
    at.prompt_hash = a.value("prompt_hash", "");
    at.completion = a.value("completion", "");
    at.result = execution_result_from_json(a.at("result"));
    at.generation_latency = a.value("generation_latency", 0.0);
    at.tokens_in = a.value("tokens_in", 0LL);
    at.tokens_out = a.value("tokens_out", 0LL);
    rec.attempts.push_back(std::move(at));
  }
  return rec;
}

json strip_timing(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool timing = false;
      for (const char* key : kTimingKeys) timing = timing || it.key() == key;
      if (!timing) out[it.key()] = strip_timing(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(strip_timing(v));
    return out;
  }
  return j;
}

}  // namespace qeval
