#include "qeval/gateway/http_providers.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "qeval/jsonl.hpp"

namespace qeval::gateway {

using nlohmann::json;

namespace {

httplib::Client make_client(const HttpEndpoint& ep) {
  httplib::Client client(ep.base_url);
  auto secs = static_cast<time_t>(ep.timeout_seconds);
  client.set_connection_timeout(30);
  client.set_read_timeout(secs);
  client.set_write_timeout(60);
  return client;
}

std::string error_detail(const json& body, const std::string& raw) {
  if (body.is_object() && body.contains("error")) {
    const auto& e = body["error"];
    if (e.is_object() && e.contains("message") && e["message"].is_string()) {
      return e["message"].get<std::string>();
    }
    if (e.is_string()) return e.get<std::string>();
  }
  return raw.substr(0, 500);
}

/// Maps an HTTP exchange onto the gateway error taxonomy; returns the parsed body on 2xx.
json check_response(const httplib::Result& res, const std::string& what) {
  if (!res) throw TransportError(what + ": " + httplib::to_string(res.error()));
  json body = json::parse(res->body, nullptr, false);
  const int status = res->status;
  if (status >= 200 && status < 300) {
    if (body.is_discarded()) throw IntegrityError(what + ": response is not JSON");
    return body;
  }
  auto detail = error_detail(body, res->body);
  if (status == 408 || status == 409 || status == 429 || status >= 500) {
    throw TransportError(what + ": HTTP " + std::to_string(status) + ": " + detail);
  }
  if (status == 400 || status == 422) {
    std::string param = "unknown";
    if (body.is_object() && body.contains("error") && body["error"].is_object()) {
      const auto& e = body["error"];
      if (e.contains("param") && e["param"].is_string()) param = e["param"].get<std::string>();
    }
    throw ParameterError(param, detail);
  }
  throw ConfigurationError(what + ": HTTP " + std::to_string(status) + ": " + detail);
}

httplib::Headers auth_bearer(const HttpEndpoint& ep) {
  if (ep.api_key.empty()) return {};
  return {{"Authorization", "Bearer " + ep.api_key}};
}

}  // namespace

OpenAICompatibleProvider::OpenAICompatibleProvider(std::string name, HttpEndpoint endpoint)
    : name_(std::move(name)), endpoint_(std::move(endpoint)) {}

ProviderReply OpenAICompatibleProvider::complete(const std::string& model,
                                                 const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body{{"model", model}, {"messages", std::move(messages)}};
  body["temperature"] = request.temperature;
  if (request.max_output_tokens) body["max_completion_tokens"] = *request.max_output_tokens;
  if (request.reasoning_effort) body["reasoning_effort"] = std::string(to_string(*request.reasoning_effort));
  if (request.verbosity) body["verbosity"] = std::string(to_string(*request.verbosity));

  auto client = make_client(endpoint_);
  auto res = client.Post(endpoint_.path_prefix + "/chat/completions", auth_bearer(endpoint_),
                         dump_compact(body), "application/json");
  json reply = check_response(res, name_ + " chat");

  ProviderReply out;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
  } catch (const json::exception& e) {
    throw IntegrityError(name_ + " chat: unexpected response shape: " + e.what());
  }
  out.model_version = reply.value("model", model);
  if (reply.contains("usage") && reply["usage"].is_object()) {
    const auto& u = reply["usage"];
    if (u.contains("prompt_tokens")) out.tokens_in = u["prompt_tokens"].get<long long>();
    if (u.contains("completion_tokens")) out.tokens_out = u["completion_tokens"].get<long long>();
  }
  return out;
}

std::vector<std::vector<float>> OpenAICompatibleProvider::embed(const std::string& model,
                                                                std::span<const std::string> texts) {
  json body{{"model", model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  auto client = make_client(endpoint_);
  auto res = client.Post(endpoint_.path_prefix + "/embeddings", auth_bearer(endpoint_),
                         dump_compact(body), "application/json");
  json reply = check_response(res, name_ + " embeddings");
  std::vector<std::vector<float>> out(texts.size());
  try {
    for (const auto& item : reply.at("data")) {
      auto index = item.value("index", std::size_t{0});
      if (index >= out.size()) throw IntegrityError(name_ + " embeddings: index out of range");
      out[index] = item.at("embedding").get<std::vector<float>>();
    }
  } catch (const json::exception& e) {
    throw IntegrityError(name_ + " embeddings: unexpected response shape: " + e.what());
  }
  return out;
}

AnthropicProvider::AnthropicProvider(HttpEndpoint endpoint, int default_max_tokens)
    : endpoint_(std::move(endpoint)), default_max_tokens_(default_max_tokens) {}

ProviderReply AnthropicProvider::complete(const std::string& model, const GenerationRequest& request) {
  if (request.reasoning_effort) throw ParameterError("reasoning_effort", "not supported by anthropic");
  if (request.verbosity) throw ParameterError("verbosity", "not supported by anthropic");

  std::string system;
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (m.role == "system") {
      system += (system.empty() ? "" : "\n\n") + m.content;
    } else {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
  }
  json body{{"model", model},
            {"messages", std::move(messages)},
            {"max_tokens", request.max_output_tokens.value_or(default_max_tokens_)},
            {"temperature", request.temperature}};
  if (!system.empty()) body["system"] = system;

  auto client = make_client(endpoint_);
  httplib::Headers headers{{"x-api-key", endpoint_.api_key}, {"anthropic-version", "2023-06-01"}};
  auto res = client.Post(endpoint_.path_prefix + "/messages", headers, dump_compact(body),
                         "application/json");
  json reply = check_response(res, "anthropic messages");

  ProviderReply out;
  for (const auto& block : reply.value("content", json::array())) {
    if (block.value("type", "") == "text") out.text += block.value("text", "");
  }
  out.model_version = reply.value("model", model);
  if (reply.contains("usage") && reply["usage"].is_object()) {
    const auto& u = reply["usage"];
    if (u.contains("input_tokens")) out.tokens_in = u["input_tokens"].get<long long>();
    if (u.contains("output_tokens")) out.tokens_out = u["output_tokens"].get<long long>();
  }
  return out;
}

RerankServerProvider::RerankServerProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

ProviderReply RerankServerProvider::complete(const std::string&, const GenerationRequest&) {
  throw ConfigurationError("provider 'tei' does not serve text generation");
}

std::vector<std::vector<float>> RerankServerProvider::embed(const std::string&,
                                                            std::span<const std::string> texts) {
  json body{{"inputs", std::vector<std::string>(texts.begin(), texts.end())}};
  auto client = make_client(endpoint_);
  auto res = client.Post(endpoint_.path_prefix + "/embed", auth_bearer(endpoint_), dump_compact(body),
                         "application/json");
  json reply = check_response(res, "tei embed");
  try {
    return reply.get<std::vector<std::vector<float>>>();
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("tei embed: unexpected response shape: ") + e.what());
  }
}

std::vector<double> RerankServerProvider::score_pairs(const std::string&, const std::string& query,
                                                      std::span<const std::string> documents) {
  json body{{"query", query}, {"texts", std::vector<std::string>(documents.begin(), documents.end())}};
  auto client = make_client(endpoint_);
  auto res = client.Post(endpoint_.path_prefix + "/rerank", auth_bearer(endpoint_), dump_compact(body),
                         "application/json");
  json reply = check_response(res, "tei rerank");
  std::vector<double> scores(documents.size(), 0.0);
  std::vector<bool> seen(documents.size(), false);
  try {
    for (const auto& item : reply) {
      auto index = item.at("index").get<std::size_t>();
      if (index >= scores.size()) throw IntegrityError("tei rerank: index out of range");
      scores[index] = item.at("score").get<double>();
      seen[index] = true;
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("tei rerank: unexpected response shape: ") + e.what());
  }
  for (bool s : seen) {
    if (!s) throw IntegrityError("tei rerank: missing scores");
  }
  return scores;
}

}  // namespace qeval::gateway
