#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cbrl/common.hpp"
#include "cbrl/oracle.hpp"
#include "cbrl/scenario.hpp"

namespace cbrl {

struct DayResult {
  std::string day_id;
  Setting setting = Setting::kSingle;
  double roi_limit = 1.0;
  double budget = kInf;
  double delivery = 0.0;
  double cost = 0.0;
  double roi = 0.0;
  double oracle_value = 0.0;
  bool feasible = true;
  std::string agent;

  bool operator==(const DayResult&) const = default;
};

/// Average normalized score: feasible days count D/D*, infeasible days 0.
inline double ans(std::span<const DayResult> results) {
  if (results.empty()) throw std::invalid_argument("ans of an empty result set");
  double total = 0.0;
  for (const auto& r : results) total += normalized_score(r.delivery, r.feasible, r.oracle_value);
  return total / static_cast<double>(results.size());
}

/// Constraint satisfaction rate.
inline double csr(std::span<const DayResult> results) {
  if (results.empty()) throw std::invalid_argument("csr of an empty result set");
  const auto n = std::count_if(results.begin(), results.end(), [](const DayResult& r) { return r.feasible; });
  return static_cast<double>(n) / static_cast<double>(results.size());
}

/// Average normalized delivery regret over feasible days, in percent (negative = behind oracle).
inline double andr(std::span<const DayResult> results) {
  double total = 0.0;
  int n = 0;
  for (const auto& r : results) {
    if (!r.feasible) continue;
    total += (normalized_score(r.delivery, true, r.oracle_value) - 1.0) * 100.0;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("andr needs at least one feasible day");
  return total / n;
}

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::vector<double> xs) {
  Summary s;
  if (xs.empty()) return {std::nan(""), std::nan(""), std::nan(""), std::nan("")};
  std::sort(xs.begin(), xs.end());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  s.median = quantile_sorted(xs, 0.5);
  s.q25 = quantile_sorted(xs, 0.25);
  s.q75 = quantile_sorted(xs, 0.75);
  return s;
}

struct PairedTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // one-sided, H1: mean(a - b) > 0
};

/// One-sided paired t-test of a > b.
inline PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired test needs equal sizes >= 2");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);
  PairedTest r;
  r.mean_diff = mean;
  if (var == 0.0) {
    r.t = mean > 0 ? kInf : (mean < 0 ? -kInf : 0.0);
    r.p_value = mean > 0 ? 0.0 : 1.0;
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

}  // namespace cbrl
