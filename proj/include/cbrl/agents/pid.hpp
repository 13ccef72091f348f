#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "cbrl/agents/policy.hpp"

namespace cbrl {

struct PidGains {
  double kp = 0.4;
  double ki = 0.05;
  double kd = 0.1;
  double integral_limit = 5.0;  // anti-windup clamp on the accumulated error
};

/// Multiplicative PID on the ROI error e = ROI - L; positive error raises the ratio.
class PidController {
 public:
  explicit PidController(PidGains gains = {}) : gains_(gains) {}

  void reset() {
    integral_ = 0.0;
    prev_error_.reset();
  }

  /// `measured_roi` is empty while nothing has been spent (neutral error).
  double step(std::optional<double> measured_roi, double target, double prev_ratio) {
    const double e = measured_roi ? *measured_roi - target : 0.0;
    integral_ = std::clamp(integral_ + e, -gains_.integral_limit, gains_.integral_limit);
    const double de = prev_error_ ? e - *prev_error_ : 0.0;
    prev_error_ = e;
    const double u = gains_.kp * e + gains_.ki * integral_ + gains_.kd * de;
    return std::clamp(prev_ratio * std::exp(u), 0.0, kMaxRatio);
  }

  double integral() const { return integral_; }
  const PidGains& gains() const { return gains_; }

 private:
  PidGains gains_;
  double integral_ = 0.0;
  std::optional<double> prev_error_;
};

class PidPolicy : public SlotPolicy {
 public:
  explicit PidPolicy(PidGains gains = {}, double initial_ratio = 1.0) : pid_(gains), initial_(initial_ratio) {}

  void begin_day(const ProblemInstance& instance, Rng&) override {
    pid_.reset();
    ratio_ = initial_;
    target_ = instance.roi_limit;
  }
  double choose_ratio(const SlotObservation&, const EpisodeLedger&, Rng&) override { return ratio_; }
  void observe(const SlotSummary&, const EpisodeLedger& ledger) override {
    std::optional<double> roi;
    if (ledger.cost > 0) roi = ledger.delivery / ledger.cost;
    ratio_ = pid_.step(roi, target_, ratio_);
  }

 private:
  PidController pid_;
  double initial_;
  double ratio_ = 1.0;
  double target_ = 1.0;
};

}  // namespace cbrl
