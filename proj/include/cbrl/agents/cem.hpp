#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cbrl/agents/policy.hpp"

namespace cbrl {

struct CemParams {
  int population = 8;          // slots sampled per refit
  double elite_fraction = 0.25;
  double init_mean = 1.0;
  double init_std = 0.5;
  double min_std = 0.05;
};

/// Within-day cross-entropy search over the bid ratio. Each slot tries one sampled ratio and is
/// scored by its slot surplus D - L*C; every `population` slots the Gaussian is refit on the elites.
class CemSearch {
 public:
  explicit CemSearch(CemParams params = {}) : params_(params) { reset(); }

  void reset() {
    mean_ = params_.init_mean;
    std_ = params_.init_std;
    samples_.clear();
    scores_.clear();
  }

  double sample(Rng& rng) {
    const double x = std::normal_distribution<double>(mean_, std_)(rng);
    pending_ = std::clamp(x, 0.0, kMaxRatio);
    return pending_;
  }

  /// Score of the most recently sampled ratio.
  void record(double score) { record(pending_, score); }

  void record(double ratio, double score) {
    samples_.push_back(ratio);
    scores_.push_back(score);
    if (static_cast<int>(samples_.size()) >= params_.population) refit();
  }

  double mean() const { return mean_; }
  double stddev() const { return std_; }

 private:
  void refit() {
    const auto [lo, hi] = std::minmax_element(scores_.begin(), scores_.end());
    if (*lo != *hi) {  // equal scores carry no information
      const int n = static_cast<int>(samples_.size());
      const int elites = std::clamp(static_cast<int>(std::ceil(params_.elite_fraction * n)), 1, n);
      std::vector<int> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores_[a] > scores_[b]; });
      double m = 0.0;
      for (int i = 0; i < elites; ++i) m += samples_[idx[i]];
      m /= elites;
      double var = 0.0;
      for (int i = 0; i < elites; ++i) var += (samples_[idx[i]] - m) * (samples_[idx[i]] - m);
      var /= elites;
      mean_ = m;
      std_ = std::max(params_.min_std, std::sqrt(var));
    }
    samples_.clear();
    scores_.clear();
  }

  CemParams params_;
  double mean_ = 1.0;
  double std_ = 0.5;
  double pending_ = 1.0;
  std::vector<double> samples_;
  std::vector<double> scores_;
};

class CemPolicy : public SlotPolicy {
 public:
  explicit CemPolicy(CemParams params = {}) : cem_(params) {}

  void begin_day(const ProblemInstance& instance, Rng&) override {
    cem_.reset();
    roi_limit_ = instance.roi_limit;
  }
  double choose_ratio(const SlotObservation&, const EpisodeLedger&, Rng& rng) override { return cem_.sample(rng); }
  void observe(const SlotSummary& s, const EpisodeLedger&) override {
    cem_.record(s.delivery - roi_limit_ * s.cost);
  }
  const CemSearch& search() const { return cem_; }

 private:
  CemSearch cem_;
  double roi_limit_ = 1.0;
};

}  // namespace cbrl
