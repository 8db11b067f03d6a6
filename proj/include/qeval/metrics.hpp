#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "qeval/run_record.hpp"
#include "qeval/task.hpp"

namespace qeval {

/// Unbiased pass@k estimator 1 - C(n-c, k) / C(n, k).
/// Evaluated as the product 1 - prod_{i=n-c+1}^{n} (1 - k/i); no binomials.
/// Throws std::invalid_argument unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

struct EvalSummary {
  double overall_pass_rate = 0.0;
  std::map<Tier, double> per_tier_pass_rate;  // tiers present in the records only
  std::map<Tier, int> per_tier_task_count;
  int task_count = 0;
  double total_wall_time = 0.0;  // serialized: summed over tasks
  std::string strategy_label;
  std::string model_label;
  int samples_per_task = 1;
  int k = 1;
  int harness_errors = 0;
};

class SummaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records are grouped by task_id; a task's samples are its records.
/// Aggregation runs in task_id order so the result is independent of
/// record order.
EvalSummary summarize(std::span<const RunRecord> records, int k = 1);

}  // namespace qeval
