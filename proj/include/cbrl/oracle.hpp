#pragma once

// Hindsight solvers over a discrete ratio grid: the slot-wise oracle (one ratio per slot,
// aggregate ROI and budget constraints), its exhaustive reference, and the best single ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cbrl/common.hpp"
#include "cbrl/env.hpp"
#include "cbrl/market.hpp"

namespace cbrl {

class RatioGrid {
 public:
  RatioGrid() : RatioGrid(0.1) {}

  /// Evenly spaced grid 0, step, 2*step, ..., 4.
  explicit RatioGrid(double step) {
    if (!(step > 0)) throw ConfigError("grid step must be positive");
    const int n = static_cast<int>(std::llround(kMaxRatio / step));
    for (int i = 0; i <= n; ++i) values_.push_back(std::min(kMaxRatio, i * step));
    values_.back() = std::min(values_.back(), kMaxRatio);
    check();
  }

  explicit RatioGrid(std::vector<double> values) : values_(std::move(values)) { check(); }

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  bool operator==(const RatioGrid&) const = default;

 private:
  void check() const {
    if (values_.empty() || values_.front() != 0.0) throw ConfigError("ratio grid must start at 0");
    if (values_.back() > kMaxRatio) throw ConfigError("ratio grid must not exceed 4");
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (!(values_[i] > values_[i - 1])) throw ConfigError("ratio grid must be strictly increasing");
  }

  std::vector<double> values_;
};

struct SlotItem {
  int slot = 0;
  double ratio = 0.0;
  double value = 0.0;   // delivery of the slot at this ratio
  double weight = 0.0;  // cost of the slot at this ratio
};

/// items[t][j]: outcome of bidding grid[j] on every impression of slot t.
inline std::vector<std::vector<SlotItem>> enumerate_items(const ProblemInstance& inst, const RatioGrid& grid) {
  std::vector<std::vector<SlotItem>> items(inst.horizon());
  for (int t = 0; t < inst.horizon(); ++t) {
    items[t].reserve(grid.size());
    for (double ratio : grid.values()) {
      SlotItem it{t, ratio, 0.0, 0.0};
      for (const Impression& imp : inst.slots[t]) {
        const AuctionOutcome out = run_auction(ratio * imp.utility, imp);
        if (out.won) {
          it.value += out.delivery;
          it.weight += out.cost;
        }
      }
      items[t].push_back(it);
    }
  }
  return items;
}

struct OraclePlan {
  std::vector<double> ratios;  // one per slot
  std::vector<int> grid_index;
  double delivery = 0.0;  // D*_T
  double cost = 0.0;      // C*_T
};

namespace detail {

inline OraclePlan evaluate_plan(const std::vector<std::vector<SlotItem>>& items, std::vector<int> choice) {
  OraclePlan p;
  p.grid_index = std::move(choice);
  for (std::size_t t = 0; t < items.size(); ++t) {
    const SlotItem& it = items[t][p.grid_index[t]];
    p.ratios.push_back(it.ratio);
    p.delivery += it.value;
    p.cost += it.weight;
  }
  return p;
}

}  // namespace detail

struct OracleOptions {
  // Weight bucket width. Unset: B/buckets for finite B (or the maximal attainable spend if that is
  // smaller), otherwise maximal attainable spend / buckets.
  std::optional<double> weight_resolution;
  int buckets = 10000;
};

/// Resolution the DP will use for these items.
inline double oracle_resolution(const std::vector<std::vector<SlotItem>>& items, double budget,
                                const OracleOptions& opt) {
  if (opt.weight_resolution) {
    if (!(*opt.weight_resolution > 0)) throw ConfigError("weight resolution must be positive");
    return *opt.weight_resolution;
  }
  double max_spend = 0.0;
  for (const auto& slot : items) {
    double w = 0.0;
    for (const auto& it : slot) w = std::max(w, it.weight);
    max_spend += w;
  }
  const double span = std::min(budget, max_spend);
  return span > 0.0 ? span / opt.buckets : 1.0;
}

/// Group-knapsack DP over bucketed cumulative spend. Each bucket keeps the partial plan with the
/// largest surplus D - L*C; the best final label passing exact re-evaluation is returned. With
/// B = inf the result is within resolution*L*T of optimal, and exact when all spends are
/// multiples of the resolution.
inline OraclePlan solve_slotwise_oracle(const std::vector<std::vector<SlotItem>>& items, double roi_limit,
                                        double budget, const OracleOptions& opt = {}) {
  const int horizon = static_cast<int>(items.size());
  if (horizon == 0) return {};
  const double eps = oracle_resolution(items, budget, opt);

  struct Label {
    double surplus = -kInf;
    double value = 0.0;
    double weight = 0.0;
    std::int64_t parent = -1;  // bucket in the previous stage
    int choice = -1;
  };
  // Labels are stored sparsely: `active` lists the occupied buckets of the current stage.
  std::vector<std::vector<Label>> stages(horizon);
  std::vector<std::int64_t> active{0};
  std::vector<Label> prev(1);
  prev[0] = {0.0, 0.0, 0.0, -1, -1};

  for (int t = 0; t < horizon; ++t) {
    std::vector<Label> cur;
    std::vector<std::int64_t> next_active;
    auto touch = [&](std::int64_t b) -> Label& {
      if (b >= static_cast<std::int64_t>(cur.size())) cur.resize(static_cast<std::size_t>(b) + 1);
      if (cur[b].choice < 0) next_active.push_back(b);
      return cur[b];
    };
    for (std::int64_t b : active) {
      const Label& from = prev[b];
      for (int j = 0; j < static_cast<int>(items[t].size()); ++j) {
        const SlotItem& it = items[t][j];
        const double w = from.weight + it.weight;
        if (w > budget) continue;
        const double v = from.value + it.value;
        const double s = v - roi_limit * w;
        const std::int64_t nb = std::llround(w / eps);
        Label& dst = touch(nb);
        if (dst.choice < 0 || s > dst.surplus || (s == dst.surplus && v > dst.value)) dst = {s, v, w, b, j};
      }
    }
    std::sort(next_active.begin(), next_active.end());
    stages[t] = cur;
    prev = std::move(cur);
    active = std::move(next_active);
  }

  // Candidates in decreasing value; first one passing exact re-evaluation wins.
  std::vector<std::int64_t> order = active;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return prev[a].value > prev[b].value; });
  for (std::int64_t b : order) {
    std::vector<int> choice(horizon);
    std::int64_t cursor = b;
    for (int t = horizon - 1; t >= 0; --t) {
      const Label& l = stages[t][cursor];
      choice[t] = l.choice;
      cursor = l.parent;
    }
    OraclePlan plan = detail::evaluate_plan(items, std::move(choice));
    if (feasibility(plan.delivery, plan.cost, roi_limit, budget).both) return plan;
  }
  return detail::evaluate_plan(items, std::vector<int>(horizon, 0));
}

inline OraclePlan solve_slotwise_oracle(const ProblemInstance& inst, const RatioGrid& grid,
                                        const OracleOptions& opt = {}) {
  return solve_slotwise_oracle(enumerate_items(inst, grid), inst.roi_limit, inst.budget, opt);
}

inline constexpr double kMaxBruteForcePlans = 1e6;

/// Exact optimum by enumerating all |grid|^T plans. Ties keep the lexicographically first plan.
inline OraclePlan brute_force_oracle(const std::vector<std::vector<SlotItem>>& items, double roi_limit,
                                     double budget) {
  const int horizon = static_cast<int>(items.size());
  double plans = 1.0;
  for (const auto& s : items) plans *= static_cast<double>(s.size());
  if (plans > kMaxBruteForcePlans) throw ConfigError("instance too large for exhaustive search");

  std::vector<int> choice(horizon, 0);
  OraclePlan best = detail::evaluate_plan(items, choice);
  while (true) {
    int t = horizon - 1;
    while (t >= 0 && ++choice[t] == static_cast<int>(items[t].size())) choice[t--] = 0;
    if (t < 0) break;
    double D = 0.0, C = 0.0;
    for (int s = 0; s < horizon; ++s) {
      D += items[s][choice[s]].value;
      C += items[s][choice[s]].weight;
    }
    if (D > best.delivery && feasibility(D, C, roi_limit, budget).both) best = detail::evaluate_plan(items, choice);
  }
  return best;
}

inline OraclePlan brute_force_oracle(const ProblemInstance& inst, const RatioGrid& grid) {
  return brute_force_oracle(enumerate_items(inst, grid), inst.roi_limit, inst.budget);
}

/// Normalized day score: D/D* when feasible, 0 otherwise; a day whose oracle is the
/// all-zero plan scores 1 when feasible with zero delivery.
inline double normalized_score(double delivery, bool feasible, double oracle_value) {
  if (!feasible) return 0.0;
  if (oracle_value <= 0.0) return delivery == 0.0 ? 1.0 : 0.0;
  return delivery / oracle_value;
}

/// Grid ratio maximizing the mean normalized score when bid on every slot of every day.
/// Ties go to the smaller ratio.
inline double solve_fixed_ratio(std::span<const ProblemInstance> instances, std::span<const double> oracle_values,
                                const RatioGrid& grid, EnvOptions env_options = {}) {
  if (instances.empty()) throw ConfigError("fixed-ratio search needs at least one instance");
  if (oracle_values.size() != instances.size()) throw ConfigError("one oracle value per instance required");
  double best_ratio = 0.0, best_score = -kInf;
  for (double ratio : grid.values()) {
    double total = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      std::vector<double> plan(inst.horizon(), ratio);
      const EpisodeLedger ledger = replay_plan(inst, plan, env_options);
      const bool ok = feasibility(ledger, inst.roi_limit, inst.budget).both;
      total += normalized_score(ledger.delivery, ok, oracle_values[i]);
    }
    const double score = total / static_cast<double>(instances.size());
    if (score > best_score) {
      best_score = score;
      best_ratio = ratio;
    }
  }
  return best_ratio;
}

}  // namespace cbrl
