#include "qeval/metrics.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace qeval {

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw std::invalid_argument("pass_at_k: require 0 <= c <= n, n >= 1");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: require 1 <= k <= n");
  if (n - c < k) return 1.0;
  if (k == 1) return static_cast<double>(c) / n;
  double all_fail = 1.0;
  for (int i = n - c + 1; i <= n; ++i) all_fail *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - all_fail;
}

EvalSummary summarize(std::span<const RunRecord> records, int k) {
  if (records.empty()) throw SummaryError("no records to summarize");

  struct TaskTally {
    Tier tier;
    int n = 0;
    int c = 0;
    double wall = 0.0;
  };
  std::map<std::string, TaskTally> tasks;  // ordered by task_id
  EvalSummary s;
  s.strategy_label = records.front().strategy;
  s.model_label = records.front().model;
  s.k = k;

  for (const auto& r : records) {
    if (r.strategy != s.strategy_label) {
      throw SummaryError("records span multiple strategies: '" + s.strategy_label + "' and '" +
                         r.strategy + "'");
    }
    auto [it, inserted] = tasks.try_emplace(r.task_id, TaskTally{r.difficulty});
    if (!inserted && it->second.tier != r.difficulty) {
      throw SummaryError("task " + r.task_id + " has conflicting difficulty tiers");
    }
    it->second.n += 1;
    it->second.c += r.passed() ? 1 : 0;
    if (r.final_status == ExecStatus::harness_error) ++s.harness_errors;
  }

  std::map<Tier, double> tier_sum;
  double overall_sum = 0.0;
  int min_samples = tasks.begin()->second.n;
  for (const auto& [id, t] : tasks) {
    if (t.n < k) {
      throw SummaryError("task " + id + " has " + std::to_string(t.n) + " samples, fewer than k=" +
                         std::to_string(k));
    }
    double p = pass_at_k(t.n, t.c, k);
    overall_sum += p;
    tier_sum[t.tier] += p;
    s.per_tier_task_count[t.tier] += 1;
    min_samples = std::min(min_samples, t.n);
  }
  // Wall time summed in task_id order, then by sample index, for order independence.
  std::vector<std::pair<std::string, double>> walls;
  walls.reserve(records.size());
  for (const auto& r : records) walls.emplace_back(r.task_id, r.wall_time_total);
  std::sort(walls.begin(), walls.end());
  for (const auto& [id, w] : walls) s.total_wall_time += w;

  s.task_count = static_cast<int>(tasks.size());
  s.samples_per_task = min_samples;
  s.overall_pass_rate = overall_sum / s.task_count;
  for (const auto& [tier, sum] : tier_sum) {
    s.per_tier_pass_rate[tier] = sum / s.per_tier_task_count[tier];
  }
  return s;
}

}  // namespace qeval
