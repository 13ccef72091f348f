#pragma once

// Reward machinery: terminal reward/cost, the hard-barrier indicator reward, curriculum
// constraint schedules with their dense rewards, and the differentiable curriculum regret.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

#include "cbrl/common.hpp"
#include "cbrl/env.hpp"

namespace cbrl {

/// Terminal objective term: (D_T - D_minus) / D*_T at termination, zero before.
inline double sparse_reward(const EpisodeLedger& ledger, bool terminal, double d_minus, double oracle_value) {
  if (!terminal) return 0.0;
  return (ledger.delivery - d_minus) / oracle_value;
}

/// Terminal constraint-violation term, each violation normalized by its limit.
inline double sparse_cost(const EpisodeLedger& ledger, bool terminal, double roi_limit, double budget) {
  if (!terminal) return 0.0;
  const Feasibility f = feasibility(ledger, roi_limit, budget);
  double cost = 0.0;
  if (!f.roi_ok) cost += (roi_limit - ledger.delivery / ledger.cost) / roi_limit;
  if (!f.budget_ok) cost += (ledger.cost - budget) / budget;
  return cost;
}

/// Hard-barrier reward: feasible episodes earn their normalized delivery, infeasible ones
/// their negated violation. Zero before termination.
inline double indicator_reward(const EpisodeLedger& ledger, bool terminal, double d_minus, double roi_limit,
                               double budget, double oracle_value) {
  if (!terminal) return 0.0;
  if (feasibility(ledger, roi_limit, budget).both) return sparse_reward(ledger, true, d_minus, oracle_value);
  return -sparse_cost(ledger, true, roi_limit, budget);
}

struct CurriculumStage {
  double roi_relax = 0.1;      // b_k
  double budget_reserve = 0.95;  // h_k
  int epochs = 3;

  bool operator==(const CurriculumStage&) const = default;
};

struct CurriculumSchedule {
  std::vector<CurriculumStage> stages;  // dense-reward stages, tightest first
  double shape_exponent = 3.0;          // g
  double smoothness = 10.0;             // v
  bool final_stage_is_sparse = true;
  int final_stage_epochs = 3;

  bool operator==(const CurriculumSchedule&) const = default;
};

inline CurriculumSchedule default_curriculum() {
  CurriculumSchedule s;
  s.stages = {{0.1, 0.95, 3}, {0.2, 0.95, 3}};
  return s;
}

inline void validate(const CurriculumSchedule& s) {
  if (!(s.shape_exponent > 0)) throw ConfigError("curriculum shape exponent must be > 0");
  if (!(s.smoothness > 0)) throw ConfigError("curriculum smoothness must be > 0");
  double prev_b = 0.0;
  for (const auto& st : s.stages) {
    if (!(st.roi_relax >= 0 && st.roi_relax <= 1) || !(st.budget_reserve >= 0 && st.budget_reserve <= 1))
      throw ConfigError("curriculum b_k and h_k must lie in [0, 1]");
    if (st.epochs < 1) throw ConfigError("curriculum stage needs at least one epoch");
    if (st.roi_relax < prev_b) throw ConfigError("curriculum stages must be ordered tightest first");
    prev_b = st.roi_relax;
  }
  if (s.final_stage_epochs < 0) throw ConfigError("final stage epochs must be >= 0");
}

struct StageLimits {
  double roi_limit;       // L_t^k
  double budget_reserve;  // B_t^k
};

/// Power-law limits after `t` of `horizon` slots. At t = horizon they equal (L, 0).
inline StageLimits curriculum_limits(int t, int horizon, const CurriculumStage& stage, double shape_exponent,
                                     double roi_limit, double budget) {
  const double remaining = std::pow(1.0 - static_cast<double>(t) / horizon, shape_exponent);
  StageLimits lim;
  lim.roi_limit = (1.0 - stage.roi_relax * remaining) * roi_limit;
  lim.budget_reserve = std::isinf(budget) ? 0.0 : stage.budget_reserve * remaining * budget;
  return lim;
}

/// Dense curriculum reward after completing slot `t` (1-based count of completed slots).
inline double dense_reward(const EpisodeLedger& ledger, double slot_delivery, int t, int horizon,
                           const CurriculumStage& stage, double shape_exponent, double roi_limit, double budget,
                           double oracle_value) {
  const StageLimits lim = curriculum_limits(t, horizon, stage, shape_exponent, roi_limit, budget);
  const double C = ledger.cost;
  const bool roi_ok = C == 0.0 || ledger.delivery / C >= lim.roi_limit;
  const double spend_cap = budget - lim.budget_reserve;  // inf when B is inf
  const bool budget_ok = C <= spend_cap;
  if (roi_ok && budget_ok) return slot_delivery / oracle_value;
  double r = 0.0;
  if (!roi_ok) r -= std::max(0.0, lim.roi_limit - ledger.delivery / C) / roi_limit;
  if (!budget_ok) r -= std::max(0.0, C - spend_cap) / budget;
  return r;
}

/// Logistic relaxation of a satisfaction indicator, midpoint at x = -sqrt(v).
inline double smooth_indicator(double x, double v) {
  return 1.0 / (1.0 + std::exp(-v * (x + std::sqrt(v))));
}

/// Per-slot delivery and cost of an episode, in slot order.
struct SlotTotals {
  double delivery = 0.0;
  double cost = 0.0;
};

struct RegretResult {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d b_k
};

/// Regret between the realized normalized delivery and the smoothed dense return of a stage,
/// masked to episodes feasible under the original constraints. The ROI satisfaction indicator
/// is replaced by smooth_indicator(ROI_t - L_t^k; v) and the ROI penalty by its unclipped
/// linear form so the loss is differentiable in b_k everywhere; the budget terms do not
/// depend on b_k and stay hard.
inline RegretResult curriculum_regret_loss(std::span<const SlotTotals> trace, const CurriculumStage& stage,
                                           double shape_exponent, double smoothness, double roi_limit,
                                           double budget, double oracle_value) {
  const int horizon = static_cast<int>(trace.size());
  double D = 0.0, C = 0.0;
  for (const auto& s : trace) {
    D += s.delivery;
    C += s.cost;
  }
  if (!feasibility(D, C, roi_limit, budget).both) return {};

  const double v = smoothness;
  double proxy_return = 0.0, d_proxy = 0.0;
  D = 0.0;
  C = 0.0;
  for (int i = 0; i < horizon; ++i) {
    const int t = i + 1;
    D += trace[i].delivery;
    C += trace[i].cost;
    const StageLimits lim = curriculum_limits(t, horizon, stage, shape_exponent, roi_limit, budget);
    const double spend_cap = budget - lim.budget_reserve;
    const bool budget_ok = C <= spend_cap;
    const double budget_pen = budget_ok ? 0.0 : (C - spend_cap) / budget;
    const double gain = trace[i].delivery / oracle_value;
    if (C == 0.0) {
      proxy_return += budget_ok ? gain : -budget_pen;
      continue;
    }
    const double roi = D / C;
    const double remaining = std::pow(1.0 - static_cast<double>(t) / horizon, shape_exponent);
    const double dlim_db = -remaining * roi_limit;  // d L_t^k / d b_k
    const double s = smooth_indicator(roi - lim.roi_limit, v);
    const double ds_db = v * s * (1.0 - s) * (-dlim_db);
    const double gap = (lim.roi_limit - roi) / roi_limit;
    const double r = (budget_ok ? gain * s : 0.0) - (1.0 - s) * gap - budget_pen;
    const double dr = (budget_ok ? gain * ds_db : 0.0) + ds_db * gap - (1.0 - s) * dlim_db / roi_limit;
    proxy_return += r;
    d_proxy += dr;
  }
  return {D / oracle_value - proxy_return, -d_proxy};
}

/// Gradient-descent tuning of a stage's b_k on the regret objective.
class AutoCurriculum {
 public:
  explicit AutoCurriculum(double learning_rate = 3e-3) : lr_(learning_rate) {}

  /// Applies one update from a finished episode; returns the regret loss.
  double update(CurriculumStage& stage, std::span<const SlotTotals> trace, double shape_exponent, double smoothness,
                double roi_limit, double budget, double oracle_value) const {
    const RegretResult r =
        curriculum_regret_loss(trace, stage, shape_exponent, smoothness, roi_limit, budget, oracle_value);
    stage.roi_relax = std::clamp(stage.roi_relax - lr_ * r.grad, 0.0, 1.0);
    return r.loss;
  }

 private:
  double lr_;
};

inline void to_json(nlohmann::json& j, const CurriculumStage& s) {
  j = nlohmann::json{{"b", s.roi_relax}, {"h", s.budget_reserve}, {"epochs", s.epochs}};
}

inline void from_json(const nlohmann::json& j, CurriculumStage& s) {
  s.roi_relax = j.at("b").get<double>();
  s.budget_reserve = j.at("h").get<double>();
  s.epochs = j.at("epochs").get<int>();
}

inline void to_json(nlohmann::json& j, const CurriculumSchedule& s) {
  j = nlohmann::json{{"stages", s.stages},
                     {"g", s.shape_exponent},
                     {"v", s.smoothness},
                     {"final_stage_is_sparse", s.final_stage_is_sparse},
                     {"final_stage_epochs", s.final_stage_epochs}};
}

inline void from_json(const nlohmann::json& j, CurriculumSchedule& s) {
  const CurriculumSchedule d = default_curriculum();
  s.stages = j.contains("stages") ? j.at("stages").get<std::vector<CurriculumStage>>() : d.stages;
  s.shape_exponent = j.value("g", d.shape_exponent);
  s.smoothness = j.value("v", d.smoothness);
  s.final_stage_is_sparse = j.value("final_stage_is_sparse", d.final_stage_is_sparse);
  s.final_stage_epochs = j.value("final_stage_epochs", d.final_stage_epochs);
}

}  // namespace cbrl
