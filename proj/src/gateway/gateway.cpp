#include "qeval/gateway/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qeval/gateway/embedder.hpp"
#include "qeval/gateway/http_providers.hpp"
#include "qeval/jsonl.hpp"
#include "qeval/text.hpp"

namespace qeval::gateway {

namespace {

constexpr std::size_t kEmbedBatch = 64;

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms
      << 'Z';
  return out.str();
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

CallLog::CallLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw ConfigurationError("cannot open call log " + path.string());
}

void CallLog::append(const std::string& line) {
  std::lock_guard lock(mutex_);
  out_ << line << '\n';
  out_.flush();
}

ConcurrencyLimiter::ConcurrencyLimiter(int max_concurrent) : capacity_(std::max(1, max_concurrent)) {}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return in_use_ < capacity_; });
  ++in_use_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    --in_use_;
  }
  cv_.notify_one();
}

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (!options_.sleeper) {
    options_.sleeper = [](double s) {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
  }
  if (!options_.call_log.empty()) call_log_ = std::make_unique<CallLog>(options_.call_log);
}

void Gateway::register_provider(std::shared_ptr<Provider> provider) {
  std::lock_guard lock(mutex_);
  auto name = provider->name();
  providers_[name] = std::move(provider);
}

bool Gateway::has_provider(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return providers_.count(name) != 0;
}

std::pair<std::string, std::string> Gateway::split_model_id(const std::string& model_id) {
  auto colon = model_id.find(':');
  if (colon == std::string::npos) return {model_id, model_id};
  return {model_id.substr(0, colon), model_id.substr(colon + 1)};
}

Provider& Gateway::route(const std::string& provider_name) {
  std::lock_guard lock(mutex_);
  auto it = providers_.find(provider_name);
  if (it == providers_.end()) {
    throw ConfigurationError("no provider registered for '" + provider_name +
                             "' (missing credentials or mock script?)");
  }
  return *it->second;
}

ConcurrencyLimiter& Gateway::limiter(const std::string& provider_name) {
  std::lock_guard lock(mutex_);
  auto& slot = limiters_[provider_name];
  if (!slot) slot = std::make_unique<ConcurrencyLimiter>(options_.max_concurrent_per_provider);
  return *slot;
}

void Gateway::log_call(const std::string& model_id, const std::string& provider,
                       const RequestContext& ctx, const std::string& outcome, int attempts,
                       double latency, long long tokens_in, long long tokens_out) {
  if (!call_log_) return;
  nlohmann::json j{{"timestamp", utc_timestamp()}, {"model", model_id},  {"provider", provider},
                   {"task_id", ctx.task_id},       {"attempt", ctx.attempt}, {"outcome", outcome},
                   {"tries", attempts},            {"latency", latency},  {"tokens_in", tokens_in},
                   {"tokens_out", tokens_out}};
  call_log_->append(dump_compact(j));
}

template <typename Fn>
auto Gateway::with_retry(const std::string& provider_name, const std::string& what, Fn&& fn) {
  auto& lim = limiter(provider_name);
  double backoff = options_.retry.initial_backoff_seconds;
  for (int attempt = 1;; ++attempt) {
    lim.acquire();
    try {
      auto result = fn(attempt);
      lim.release();
      return result;
    } catch (const TransportError& e) {
      lim.release();
      if (attempt >= options_.retry.max_attempts) {
        throw TransportError(what + ": giving up after " + std::to_string(attempt) +
                             " attempts: " + e.what());
      }
    } catch (...) {
      lim.release();
      throw;
    }
    options_.sleeper(backoff);
    backoff = std::min(backoff * options_.retry.multiplier, options_.retry.max_backoff_seconds);
  }
}

Generation Gateway::generate(const GenerationRequest& request) {
  if (request.messages.empty()) throw ParameterError("messages", "must not be empty");
  if (request.temperature < 0.0) throw ParameterError("temperature", "must be >= 0");
  auto [provider_name, model] = split_model_id(request.model_id);
  Provider& provider = route(provider_name);

  int tries = 0;
  try {
    auto result = with_retry(provider_name, "generate " + request.model_id, [&](int attempt) {
      tries = attempt;
      auto start = std::chrono::steady_clock::now();
      ProviderReply reply = provider.complete(model, request);
      double latency =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return std::make_pair(std::move(reply), latency);
    });
    auto& [reply, latency] = result;
    Generation g;
    g.text = std::move(reply.text);
    g.model_version_reported = reply.model_version.empty() ? request.model_id : reply.model_version;
    g.latency = latency;
    g.provider = provider.name();
    if (reply.tokens_in) {
      g.tokens_in = *reply.tokens_in;
    } else {
      for (const auto& m : request.messages) g.tokens_in += estimate_tokens(m.content);
    }
    g.tokens_out = reply.tokens_out ? *reply.tokens_out : estimate_tokens(g.text);
    log_call(request.model_id, g.provider, request.context, "ok", tries, g.latency, g.tokens_in,
             g.tokens_out);
    return g;
  } catch (const ParameterError&) {
    log_call(request.model_id, provider_name, request.context, "parameter_error", tries, 0, 0, 0);
    throw;
  } catch (const TransportError&) {
    log_call(request.model_id, provider_name, request.context, "transport_error", tries, 0, 0, 0);
    throw;
  } catch (const GatewayError&) {
    log_call(request.model_id, provider_name, request.context, "error", tries, 0, 0, 0);
    throw;
  }
}

std::vector<std::vector<float>> Gateway::embed(std::span<const std::string> texts,
                                               const std::string& embedder_id) {
  if (texts.empty()) return {};
  if (auto dim = feature_hash_dimension(embedder_id); dim > 0) {
    return FeatureHashEmbedder(dim).embed(texts);
  }
  auto [provider_name, model] = split_model_id(embedder_id);
  Provider& provider = route(provider_name);
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += kEmbedBatch) {
    auto batch = texts.subspan(i, std::min(kEmbedBatch, texts.size() - i));
    auto vectors = with_retry(provider_name, "embed " + embedder_id,
                              [&](int) { return provider.embed(model, batch); });
    if (vectors.size() != batch.size()) {
      throw IntegrityError("embed " + embedder_id + ": expected " + std::to_string(batch.size()) +
                           " vectors, got " + std::to_string(vectors.size()));
    }
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  for (const auto& v : out) {
    if (v.empty() || v.size() != out.front().size()) {
      throw IntegrityError("embed " + embedder_id + ": inconsistent vector dimensions");
    }
  }
  return out;
}

std::vector<double> Gateway::score_pairs(const std::string& model_id, const std::string& query,
                                         std::span<const std::string> documents) {
  if (documents.empty()) return {};
  auto [provider_name, model] = split_model_id(model_id);
  Provider& provider = route(provider_name);
  auto scores = with_retry(provider_name, "score " + model_id,
                           [&](int) { return provider.score_pairs(model, query, documents); });
  if (scores.size() != documents.size()) {
    throw IntegrityError("score " + model_id + ": expected " + std::to_string(documents.size()) +
                         " scores, got " + std::to_string(scores.size()));
  }
  return scores;
}

void Gateway::register_providers_from_env() {
  if (const char* key = std::getenv("OPENAI_API_KEY"); key && *key) {
    register_provider(std::make_shared<OpenAICompatibleProvider>(
        "openai", HttpEndpoint{env_or("OPENAI_BASE_URL", "https://api.openai.com"), "/v1", key}));
  }
  if (const char* key = std::getenv("GEMINI_API_KEY"); key && *key) {
    register_provider(std::make_shared<OpenAICompatibleProvider>(
        "gemini", HttpEndpoint{env_or("GEMINI_BASE_URL", "https://generativelanguage.googleapis.com"),
                               "/v1beta/openai", key}));
  }
  if (const char* key = std::getenv("ANTHROPIC_API_KEY"); key && *key) {
    register_provider(std::make_shared<AnthropicProvider>(
        HttpEndpoint{env_or("ANTHROPIC_BASE_URL", "https://api.anthropic.com"), "/v1", key}));
  }
  if (const char* base = std::getenv("TEI_BASE_URL"); base && *base) {
    register_provider(
        std::make_shared<RerankServerProvider>(HttpEndpoint{base, "", env_or("TEI_API_KEY", "")}));
  }
}

}  // namespace qeval::gateway
