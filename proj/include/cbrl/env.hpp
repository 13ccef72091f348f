#pragma once

// Slot-wise bidding episode: one day as T steps of a single bid ratio.

#include <algorithm>
#include <array>
#include <cassert>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrl/common.hpp"
#include "cbrl/evidence.hpp"
#include "cbrl/market.hpp"

namespace cbrl {

inline constexpr double kMaxRatio = 4.0;

struct EpisodeLedger {
  double delivery = 0.0;  // D
  double cost = 0.0;      // C
  std::vector<double> slot_delivery;
  std::vector<double> slot_cost;
  int wins = 0;
  bool terminated_early = false;
  int current_slot = 0;  // number of completed slots

  explicit EpisodeLedger(int horizon = 0) : slot_delivery(horizon, 0.0), slot_cost(horizon, 0.0) {}
  bool operator==(const EpisodeLedger&) const = default;
};

struct Feasibility {
  bool roi_ok = true;
  bool budget_ok = true;
  bool both = true;
};

/// No-spend convention: C = 0 satisfies the ROI constraint.
inline Feasibility feasibility(double delivery, double cost, double roi_limit, double budget) {
  Feasibility f;
  f.roi_ok = cost == 0.0 || delivery / cost >= roi_limit;
  f.budget_ok = cost <= budget;
  f.both = f.roi_ok && f.budget_ok;
  return f;
}

inline Feasibility feasibility(const EpisodeLedger& ledger, double roi_limit, double budget) {
  return feasibility(ledger.delivery, ledger.cost, roi_limit, budget);
}

/// Observation features, in order.
enum Feature : int {
  kTimeProgress = 0,
  kPrevRatio,
  kRoiGap,
  kBudgetRate,
  kSlotRoiGap,
  kSlotDeliveryNorm,
  kSurplusNorm,
  kNumFeatures
};

struct ClipRange {
  double lo;
  double hi;
};

struct ObservationClip {
  std::array<ClipRange, kNumFeatures> ranges{{{0.0, 1.0},
                                              {0.0, kMaxRatio},
                                              {-3.0, 3.0},
                                              {0.0, 1.5},
                                              {-3.0, 3.0},
                                              {0.0, 5.0},
                                              {-3.0, 3.0}}};
};

struct SlotObservation {
  std::array<double, kNumFeatures> features{};

  double operator[](Feature f) const { return features[f]; }
  bool operator==(const SlotObservation&) const = default;
};

/// Observation for the decision at slot `t` (0-based), built from the ledger after slots [0, t).
inline SlotObservation build_observation(const EpisodeLedger& ledger, int t, int horizon, double prev_ratio,
                                         double roi_limit, double budget, double oracle_value,
                                         const ObservationClip& clip = {}) {
  SlotObservation obs;
  auto& f = obs.features;
  const double D = ledger.delivery;
  const double C = ledger.cost;
  f[kTimeProgress] = static_cast<double>(t) / horizon;
  f[kPrevRatio] = prev_ratio;
  f[kRoiGap] = C > 0.0 ? D / C - roi_limit : 0.0;
  f[kBudgetRate] = std::isinf(budget) ? 0.0 : C / budget;
  if (t >= 1) {
    const double sd = ledger.slot_delivery[t - 1];
    const double sc = ledger.slot_cost[t - 1];
    f[kSlotRoiGap] = sc > 0.0 ? sd / sc - roi_limit : 0.0;
    f[kSlotDeliveryNorm] = horizon * sd / oracle_value;
  }
  f[kSurplusNorm] = (D - roi_limit * C) / oracle_value;
  for (int i = 0; i < kNumFeatures; ++i) f[i] = std::clamp(f[i], clip.ranges[i].lo, clip.ranges[i].hi);
  return obs;
}

struct SlotSummary {
  int slot = 0;
  double ratio = 0.0;
  double delivery = 0.0;
  double cost = 0.0;
  int wins = 0;
  int losses = 0;
  int skipped = 0;  // bids withheld by the budget guard
  SlotEvidence evidence;
};

struct StepResult {
  SlotObservation observation;
  SlotSummary summary;
  bool done = false;
};

struct EnvOptions {
  ObservationClip clip;
  // The day ends early once remaining budget falls to this fraction of B.
  double budget_exhaustion_fraction = 1e-3;
};

class BiddingEnv {
 public:
  explicit BiddingEnv(EnvOptions options = {}) : options_(options) {}

  /// The instance must outlive the episode.
  SlotObservation reset(const ProblemInstance& instance, double oracle_value) {
    if (!(oracle_value > 0.0)) throw ConfigError("oracle value for normalization must be positive");
    instance_ = &instance;
    oracle_value_ = oracle_value;
    ledger_ = EpisodeLedger(instance.horizon());
    prev_ratio_ = 1.0;
    done_ = false;
    return observe();
  }

  StepResult step(double ratio) {
    if (instance_ == nullptr) throw std::logic_error("step before reset");
    if (done_) throw std::logic_error("step after episode end");
    if (!(ratio >= 0.0 && ratio <= kMaxRatio)) throw std::out_of_range("bid ratio outside [0, 4]");

    const int t = ledger_.current_slot;
    const double budget = instance_->budget;
    StepResult result;
    SlotSummary& s = result.summary;
    s.slot = t;
    s.ratio = ratio;
    s.evidence.ratio = ratio;
    for (const Impression& imp : instance_->slots[t]) {
      const double bid = ratio * imp.utility;
      if (ledger_.cost + bid > budget) {
        ++s.skipped;
        continue;
      }
      const AuctionOutcome out = run_auction(bid, imp);
      if (out.won) {
        ledger_.cost += out.cost;
        ledger_.delivery += out.delivery;
        s.cost += out.cost;
        s.delivery += out.delivery;
        ++s.wins;
        s.evidence.won_prices.push_back(*out.revealed_price);
        s.evidence.won_utilities.push_back(imp.utility);
      } else {
        ++s.losses;
        if (bid > 0.0) {
          s.evidence.lost_bids.push_back(bid);
          s.evidence.lost_utilities.push_back(imp.utility);
        }
      }
    }
    ledger_.slot_delivery[t] = s.delivery;
    ledger_.slot_cost[t] = s.cost;
    ledger_.wins += s.wins;
    ledger_.current_slot = t + 1;
    if (!std::isinf(budget) && budget - ledger_.cost <= options_.budget_exhaustion_fraction * budget)
      ledger_.terminated_early = ledger_.current_slot < instance_->horizon();
    prev_ratio_ = ratio;
    done_ = ledger_.current_slot == instance_->horizon() || ledger_.terminated_early;
    result.done = done_;
    result.observation = observe();
    return result;
  }

  const EpisodeLedger& ledger() const { return ledger_; }
  const ProblemInstance& instance() const { return *instance_; }
  double oracle_value() const { return oracle_value_; }
  int current_slot() const { return ledger_.current_slot; }
  int horizon() const { return instance_->horizon(); }
  bool done() const { return done_; }

 private:
  SlotObservation observe() const {
    return build_observation(ledger_, ledger_.current_slot, instance_->horizon(), prev_ratio_,
                             instance_->roi_limit, instance_->budget, oracle_value_, options_.clip);
  }

  EnvOptions options_;
  const ProblemInstance* instance_ = nullptr;
  double oracle_value_ = 1.0;
  EpisodeLedger ledger_;
  double prev_ratio_ = 1.0;
  bool done_ = false;
};

/// One line of an episode trace dump.
inline std::string trace_record(const SlotSummary& s, const EpisodeLedger& ledger) {
  nlohmann::ordered_json j;
  j["t"] = s.slot;
  j["beta"] = s.ratio;
  j["slot_D"] = s.delivery;
  j["slot_C"] = s.cost;
  j["D"] = ledger.delivery;
  j["C"] = ledger.cost;
  return j.dump();
}

/// Replays a fixed ratio plan; returns the final ledger.
inline EpisodeLedger replay_plan(const ProblemInstance& instance, std::span<const double> ratios,
                                 EnvOptions options = {}) {
  BiddingEnv env(options);
  env.reset(instance, 1.0);
  for (double r : ratios) {
    if (env.done()) break;
    env.step(r);
  }
  return env.ledger();
}

}  // namespace cbrl
