#pragma once

// Discrete-regime Bayes filter over censored auction evidence, posterior (Thompson) sampling,
// and the Gaussian KL / negated-ELBO objective.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cbrl/common.hpp"
#include "cbrl/evidence.hpp"
#include "cbrl/market.hpp"

namespace cbrl {

struct Belief {
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
  bool valid(double tol = 1e-12) const {
    if (probs.empty()) return false;
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
  }
};

inline Belief init_belief(int num_regimes) {
  if (num_regimes < 1) throw ConfigError("belief needs at least one regime");
  return {std::vector<double>(num_regimes, 1.0 / num_regimes)};
}

/// Censored log-likelihood of one slot of evidence under a regime, given m = u * rho with
/// ln rho ~ N(mu, sigma^2): wins contribute the density of rho = m/u, losses the survival
/// P(rho >= bid/u).
inline double slot_log_likelihood(const RegimeModel& regime, const SlotEvidence& ev) {
  if (!ev.consistent()) throw std::invalid_argument("inconsistent slot evidence");
  const double mu = regime.price_ratio_log_mean;
  const double sigma = regime.price_ratio_log_std;
  const double log_norm = std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  double ll = 0.0;
  for (std::size_t i = 0; i < ev.won_prices.size(); ++i) {
    if (!(ev.won_utilities[i] > 0)) throw std::invalid_argument("zero utility in evidence");
    const double log_rho = std::log(ev.won_prices[i] / ev.won_utilities[i]);
    const double z = (log_rho - mu) / sigma;
    ll += -log_rho - log_norm - 0.5 * z * z;
  }
  for (std::size_t i = 0; i < ev.lost_bids.size(); ++i) {
    if (!(ev.lost_utilities[i] > 0)) throw std::invalid_argument("zero utility in evidence");
    const double z = (std::log(ev.lost_bids[i] / ev.lost_utilities[i]) - mu) / sigma;
    ll += log_normal_survival(z);
  }
  return ll;
}

struct BeliefUpdate {
  Belief belief;
  bool degenerate = false;  // every regime had zero likelihood; only the predict step was applied
};

/// Predict through the regime chain, then condition on the slot's evidence.
inline BeliefUpdate update_belief(const Belief& belief, const SlotEvidence& ev, std::span<const RegimeModel> regimes,
                                  const std::vector<std::vector<double>>& transition) {
  const int k = belief.size();
  if (static_cast<int>(regimes.size()) != k || static_cast<int>(transition.size()) != k)
    throw std::invalid_argument("belief, regimes and transition sizes differ");

  std::vector<double> predicted(k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) predicted[j] += belief.probs[i] * transition[i][j];
  double psum = std::accumulate(predicted.begin(), predicted.end(), 0.0);
  for (double& p : predicted) p /= psum;

  if (ev.empty()) return {{predicted}, false};

  std::vector<double> logpost(k);
  double best = -kInf;
  for (int j = 0; j < k; ++j) {
    logpost[j] = predicted[j] > 0.0 ? std::log(predicted[j]) + slot_log_likelihood(regimes[j], ev) : -kInf;
    best = std::max(best, logpost[j]);
  }
  if (!std::isfinite(best)) return {{predicted}, true};

  std::vector<double> post(k);
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    post[j] = std::exp(logpost[j] - best);
    sum += post[j];
  }
  for (double& p : post) p /= sum;
  return {{post}, false};
}

inline int thompson_sample(const Belief& belief, Rng& rng) { return sample_categorical(belief.probs, rng); }

/// KL(N(mu, diag(sigma^2)) || N(0, I)), summed over dimensions.
inline double gaussian_kl(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("mu and sigma dimensions differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0)) throw std::invalid_argument("sigma must be positive");
    kl += 0.5 * (sigma[i] * sigma[i] + mu[i] * mu[i] - 1.0 - 2.0 * std::log(sigma[i]));
  }
  return kl;
}

inline double gaussian_kl(double mu, double sigma) {
  return gaussian_kl(std::span<const double>(&mu, 1), std::span<const double>(&sigma, 1));
}

/// Negated ELBO: mean squared Bellman residual under sampled latents plus the prior KL.
inline double elbo_loss(std::span<const double> squared_residuals, std::span<const double> mu,
                        std::span<const double> sigma) {
  if (squared_residuals.empty()) throw std::invalid_argument("elbo_loss needs at least one residual");
  const double mean = std::accumulate(squared_residuals.begin(), squared_residuals.end(), 0.0) /
                      static_cast<double>(squared_residuals.size());
  return mean + gaussian_kl(mu, sigma);
}

inline double elbo_loss(std::span<const double> squared_residuals, double mu, double sigma) {
  return elbo_loss(squared_residuals, std::span<const double>(&mu, 1), std::span<const double>(&sigma, 1));
}

}  // namespace cbrl
