#pragma once

// Benchmark days: an instance plus its hindsight oracle, under the single-constraint (SC) or
// multi-constraint (MC) setting.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrl/market.hpp"
#include "cbrl/oracle.hpp"

namespace cbrl {

enum class Setting { kSingle, kMulti };

inline std::string to_string(Setting s) { return s == Setting::kSingle ? "SC" : "MC"; }

inline Setting parse_setting(const std::string& s) {
  if (s == "SC") return Setting::kSingle;
  if (s == "MC") return Setting::kMulti;
  throw ConfigError("unknown constraint setting '" + s + "' (expected SC or MC)");
}

struct ConstraintSetting {
  Setting kind = Setting::kSingle;
  double roi_limit = 1.0;  // SC limit
  // MC: L ~ U[roi_min, roi_max], B ~ U[budget_min, budget_max] * unconstrained oracle spend.
  double roi_min = 0.8;
  double roi_max = 1.5;
  double budget_min = 0.25;
  double budget_max = 0.75;

  bool operator==(const ConstraintSetting&) const = default;
};

struct Day {
  std::uint64_t id = 0;
  ProblemInstance instance;
  OraclePlan oracle;

  double oracle_value() const { return oracle.delivery; }
  /// Value used to normalize rewards and features; falls back to 1 on days whose oracle wins nothing.
  double normalizer() const { return oracle.delivery > 0.0 ? oracle.delivery : 1.0; }
};

/// Sets L and B on the instance; MC samples them per day, with B a fraction of the spend of the
/// budget-free oracle.
inline ProblemInstance constrain_instance(ProblemInstance inst, std::uint64_t id, const ConstraintSetting& setting,
                                          std::uint64_t seed, const RatioGrid& grid,
                                          const OracleOptions& oracle_options) {
  if (setting.kind == Setting::kSingle) {
    inst.roi_limit = setting.roi_limit;
    inst.budget = kInf;
    return inst;
  }
  Rng rng = make_rng(seed ^ 0xc0ffeeULL, id);
  inst.roi_limit = std::uniform_real_distribution<double>(setting.roi_min, setting.roi_max)(rng);
  const double frac = std::uniform_real_distribution<double>(setting.budget_min, setting.budget_max)(rng);
  const OraclePlan unconstrained = solve_slotwise_oracle(enumerate_items(inst, grid), inst.roi_limit, kInf, oracle_options);
  inst.budget = unconstrained.cost > 0.0 ? frac * unconstrained.cost : 1.0;
  return inst;
}

/// Attaches constraints and solves the oracle.
inline Day finalize_day(ProblemInstance inst, std::uint64_t id, const ConstraintSetting& setting,
                        std::uint64_t seed, const RatioGrid& grid, const OracleOptions& oracle_options) {
  Day day;
  day.id = id;
  day.instance = constrain_instance(std::move(inst), id, setting, seed, grid, oracle_options);
  day.oracle = solve_slotwise_oracle(day.instance, grid, oracle_options);
  return day;
}

inline Day make_day(const MarketConfig& market, const ConstraintSetting& setting, std::uint64_t day_id,
                    const RatioGrid& grid, const OracleOptions& oracle_options = {}) {
  return finalize_day(generate_day(market, {}, day_id), day_id, setting, market.seed, grid, oracle_options);
}

/// Day whose regime flips halfway: regime `first` for slots [0, T/2), then `second`.
inline Day make_switching_day(const MarketConfig& market, const ConstraintSetting& setting, std::uint64_t day_id,
                              int first, int second, const RatioGrid& grid, const OracleOptions& oracle_options = {}) {
  std::vector<int> trace(market.slots_per_day, first);
  for (int t = market.slots_per_day / 2; t < market.slots_per_day; ++t) trace[t] = second;
  return finalize_day(generate_day_with_trace(market, {}, std::move(trace), day_id), day_id, setting, market.seed,
                      grid, oracle_options);
}

inline void to_json(nlohmann::json& j, const ConstraintSetting& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},      {"L", s.roi_limit},          {"L_min", s.roi_min},
                     {"L_max", s.roi_max},             {"B_frac_min", s.budget_min}, {"B_frac_max", s.budget_max}};
}

inline void from_json(const nlohmann::json& j, ConstraintSetting& s) {
  const ConstraintSetting d;
  s.kind = parse_setting(j.value("kind", std::string("SC")));
  s.roi_limit = j.value("L", d.roi_limit);
  s.roi_min = j.value("L_min", d.roi_min);
  s.roi_max = j.value("L_max", d.roi_max);
  s.budget_min = j.value("B_frac_min", d.budget_min);
  s.budget_max = j.value("B_frac_max", d.budget_max);
}

}  // namespace cbrl
