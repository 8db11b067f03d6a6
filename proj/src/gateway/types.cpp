#include "qeval/gateway/provider.hpp"
#include "qeval/gateway/types.hpp"

namespace qeval::gateway {

std::string_view to_string(ReasoningEffort effort) {
  switch (effort) {
    case ReasoningEffort::minimal: return "minimal";
    case ReasoningEffort::low: return "low";
    case ReasoningEffort::medium: return "medium";
    case ReasoningEffort::high: return "high";
  }
  return "medium";
}

std::string_view to_string(Verbosity verbosity) {
  switch (verbosity) {
    case Verbosity::low: return "low";
    case Verbosity::medium: return "medium";
    case Verbosity::high: return "high";
  }
  return "medium";
}

std::optional<ReasoningEffort> parse_reasoning_effort(std::string_view text) {
  for (auto e : {ReasoningEffort::minimal, ReasoningEffort::low, ReasoningEffort::medium,
                 ReasoningEffort::high}) {
    if (to_string(e) == text) return e;
  }
  return std::nullopt;
}

std::optional<Verbosity> parse_verbosity(std::string_view text) {
  for (auto v : {Verbosity::low, Verbosity::medium, Verbosity::high}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

std::vector<std::vector<float>> Provider::embed(const std::string&, std::span<const std::string>) {
  throw ConfigurationError("provider '" + name() + "' does not serve embeddings");
}

std::vector<double> Provider::score_pairs(const std::string&, const std::string&,
                                          std::span<const std::string>) {
  throw ConfigurationError("provider '" + name() + "' does not serve pairwise scoring");
}

}  // namespace qeval::gateway
