#pragma once

#include <memory>
#include <vector>

#include "cbrl/common.hpp"
#include "cbrl/env.hpp"
#include "cbrl/market.hpp"

namespace cbrl {

/// Optimal per-impression bid shape: a ratio times the predicted utility.
inline double linear_bid(double ratio, double utility) { return ratio * utility; }

/// A slot-level bidding policy: picks one ratio per slot and sees the slot's outcome.
class SlotPolicy {
 public:
  virtual ~SlotPolicy() = default;
  virtual void begin_day(const ProblemInstance& instance, Rng& rng) = 0;
  virtual double choose_ratio(const SlotObservation& obs, const EpisodeLedger& ledger, Rng& rng) = 0;
  virtual void observe(const SlotSummary& summary, const EpisodeLedger& ledger) = 0;
};

struct DayOutcome {
  double delivery = 0.0;
  double cost = 0.0;
  double roi = 0.0;  // D/C, 0 for a no-spend day
  bool feasible = true;
  std::vector<double> ratios;
};

inline DayOutcome run_day(SlotPolicy& policy, const ProblemInstance& instance, double oracle_value, Rng& rng,
                          EnvOptions env_options = {}) {
  BiddingEnv env(env_options);
  SlotObservation obs = env.reset(instance, oracle_value > 0 ? oracle_value : 1.0);
  policy.begin_day(instance, rng);
  DayOutcome out;
  while (!env.done()) {
    const double ratio = std::clamp(policy.choose_ratio(obs, env.ledger(), rng), 0.0, kMaxRatio);
    StepResult step = env.step(ratio);
    policy.observe(step.summary, env.ledger());
    out.ratios.push_back(ratio);
    obs = step.observation;
  }
  const EpisodeLedger& l = env.ledger();
  out.delivery = l.delivery;
  out.cost = l.cost;
  out.roi = l.cost > 0 ? l.delivery / l.cost : 0.0;
  out.feasible = feasibility(l, instance.roi_limit, instance.budget).both;
  return out;
}

class FixedRatioPolicy : public SlotPolicy {
 public:
  explicit FixedRatioPolicy(double ratio) : ratio_(ratio) {}
  void begin_day(const ProblemInstance&, Rng&) override {}
  double choose_ratio(const SlotObservation&, const EpisodeLedger&, Rng&) override { return ratio_; }
  void observe(const SlotSummary&, const EpisodeLedger&) override {}

 private:
  double ratio_;
};

}  // namespace cbrl
