#pragma once

// Synthetic regime-switching second-price market and its dataset format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cbrl/common.hpp"

namespace cbrl {

struct Impression {
  int slot_index = 0;
  double utility = 1.0;       // predicted value u
  double delivery = 0.0;      // realized value d, hidden before bidding
  double market_price = 1.0;  // highest competing bid m, revealed only on a win

  bool operator==(const Impression&) const = default;
};

struct RegimeModel {
  int regime_id = 0;
  double price_ratio_log_mean = 0.0;  // mean of ln(m/u)
  double price_ratio_log_std = 0.3;
  double arrival_rate = 50.0;  // mean impressions per slot
  double utility_log_mean = 0.0;
  double utility_log_std = 0.5;
  double delivery_noise_log_std = 0.0;

  bool operator==(const RegimeModel&) const = default;
};

struct MarketConfig {
  std::vector<RegimeModel> regimes;
  std::vector<std::vector<double>> transition_matrix;  // per-slot regime chain, row-stochastic
  int slots_per_day = 48;
  std::uint64_t seed = 0;
  double min_regime_separation = 0.1;  // required gap between regime price_ratio_log_mean values

  int num_regimes() const { return static_cast<int>(regimes.size()); }
  bool operator==(const MarketConfig&) const = default;
};

struct ProblemInstance {
  std::vector<std::vector<Impression>> slots;  // slots[t] holds the impressions of slot t
  double roi_limit = 1.0;                      // L
  double budget = kInf;                        // B, +inf in the single-constraint setting
  int num_regimes = 1;
  std::vector<int> regime_trace;  // ground truth, diagnostics only

  int horizon() const { return static_cast<int>(slots.size()); }
  std::size_t num_impressions() const {
    std::size_t n = 0;
    for (const auto& s : slots) n += s.size();
    return n;
  }
  bool operator==(const ProblemInstance&) const = default;
};

struct Constraints {
  double roi_limit = 1.0;
  double budget = kInf;
};

struct AuctionOutcome {
  bool won = false;
  double cost = 0.0;
  double delivery = 0.0;
  std::optional<double> revealed_price;
};

/// Second-price auction against the highest competing bid. Ties lose.
inline AuctionOutcome run_auction(double bid, const Impression& imp) {
  if (bid > imp.market_price) {
    return {true, imp.market_price, imp.delivery, imp.market_price};
  }
  return {};
}

inline void validate(const MarketConfig& config) {
  const int k = config.num_regimes();
  if (k == 0) throw ConfigError("market config has no regimes");
  if (config.slots_per_day < 2) throw ConfigError("slots_per_day must be >= 2");
  for (int r = 0; r < k; ++r) {
    const auto& m = config.regimes[r];
    if (m.regime_id != r) throw ConfigError("regime_id must equal its position in the list");
    if (!(m.price_ratio_log_std > 0) || !(m.utility_log_std > 0) || !(m.arrival_rate > 0))
      throw ConfigError("regime " + std::to_string(r) + ": std and arrival fields must be > 0");
    if (!(m.delivery_noise_log_std >= 0))
      throw ConfigError("regime " + std::to_string(r) + ": delivery_noise_log_std must be >= 0");
  }
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (std::abs(config.regimes[a].price_ratio_log_mean - config.regimes[b].price_ratio_log_mean) <
          config.min_regime_separation)
        throw ConfigError("regimes " + std::to_string(a) + " and " + std::to_string(b) +
                          " are not separated in price_ratio_log_mean");
  if (static_cast<int>(config.transition_matrix.size()) != k)
    throw ConfigError("transition_matrix must be K x K");
  for (const auto& row : config.transition_matrix) {
    if (static_cast<int>(row.size()) != k) throw ConfigError("transition_matrix must be K x K");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError("transition_matrix has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("transition_matrix row does not sum to 1");
  }
}

/// Stationary distribution of the regime chain (Cesaro average, so periodic chains work too).
inline std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& P) {
  // Solve pi (P - I) = 0 with sum(pi) = 1; the normalization replaces one balance equation.
  const auto k = static_cast<Eigen::Index>(P.size());
  Eigen::MatrixXd A(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) A(j, i) = P[i][j] - (i == j ? 1.0 : 0.0);
  A.row(k - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs(k - 1) = 1.0;
  const Eigen::VectorXd x = A.fullPivLu().solve(rhs);
  std::vector<double> pi(x.data(), x.data() + k);
  for (double& v : pi) v = std::max(v, 0.0);
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& v : pi) v /= total;
  return pi;
}

inline int sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding slack: return the last index with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<int>(i);
  return 0;
}

/// Regime path sampled from the chain, starting from its stationary distribution.
inline std::vector<int> sample_regime_trace(const MarketConfig& config, int horizon, Rng& rng) {
  std::vector<int> trace(horizon);
  const auto pi = stationary_distribution(config.transition_matrix);
  trace[0] = sample_categorical(pi, rng);
  for (int t = 1; t < horizon; ++t) trace[t] = sample_categorical(config.transition_matrix[trace[t - 1]], rng);
  return trace;
}

/// One day with a prescribed regime path (used for controlled test sets such as mid-day switches).
inline ProblemInstance generate_day_with_trace(const MarketConfig& config, Constraints constraints,
                                               std::vector<int> trace, std::uint64_t day_seed) {
  validate(config);
  if (static_cast<int>(trace.size()) != config.slots_per_day)
    throw ConfigError("regime trace length must equal slots_per_day");
  for (int r : trace)
    if (r < 0 || r >= config.num_regimes()) throw ConfigError("regime trace entry out of range");

  Rng rng = make_rng(config.seed, splitmix64(day_seed) ^ 0x5bd1e995ULL);
  ProblemInstance inst;
  inst.roi_limit = constraints.roi_limit;
  inst.budget = constraints.budget;
  inst.num_regimes = config.num_regimes();
  inst.slots.resize(config.slots_per_day);
  for (int t = 0; t < config.slots_per_day; ++t) {
    const RegimeModel& reg = config.regimes[trace[t]];
    const int n = std::poisson_distribution<int>(reg.arrival_rate)(rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto& slot = inst.slots[t];
    slot.reserve(n);
    const double noise = reg.delivery_noise_log_std;
    for (int i = 0; i < n; ++i) {
      const double u = std::exp(reg.utility_log_mean + reg.utility_log_std * gauss(rng));
      const double rho = std::exp(reg.price_ratio_log_mean + reg.price_ratio_log_std * gauss(rng));
      const double z = gauss(rng);
      const double eta = noise > 0.0 ? std::exp(-0.5 * noise * noise + noise * z) : 1.0;
      slot.push_back({t, u, u * eta, u * rho});
    }
  }
  inst.regime_trace = std::move(trace);
  return inst;
}

/// One synthetic day. Deterministic for fixed (config.seed, day_seed).
inline ProblemInstance generate_day(const MarketConfig& config, Constraints constraints, std::uint64_t day_seed) {
  validate(config);
  Rng rng = make_rng(config.seed, splitmix64(day_seed));
  auto trace = sample_regime_trace(config, config.slots_per_day, rng);
  return generate_day_with_trace(config, constraints, std::move(trace), day_seed);
}

// ---------------------------------------------------------------------------
// Dataset format: line 1 is a header record, then one impression per line.

inline void write_dataset(const ProblemInstance& inst, std::ostream& out) {
  nlohmann::ordered_json header;
  header["T"] = inst.horizon();
  header["L"] = inst.roi_limit;
  if (std::isinf(inst.budget))
    header["B"] = nullptr;
  else
    header["B"] = inst.budget;
  header["K"] = inst.num_regimes;
  header["regime_trace"] = inst.regime_trace;
  out << header.dump() << '\n';
  for (const auto& slot : inst.slots) {
    for (const auto& imp : slot) {
      nlohmann::ordered_json rec;
      rec["slot"] = imp.slot_index;
      rec["u"] = imp.utility;
      rec["d"] = imp.delivery;
      rec["m"] = imp.market_price;
      out << rec.dump() << '\n';
    }
  }
}

inline void write_dataset(const ProblemInstance& inst, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_dataset(inst, out);
  if (!out) throw DataError("write failed: " + path);
}

namespace detail {

inline double require_number(const nlohmann::json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_number())
    throw DataError("line " + std::to_string(line) + ": missing or non-numeric field '" + key + "'");
  return it->get<double>();
}

}  // namespace detail

inline ProblemInstance read_dataset(std::istream& in, const std::string& name = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(name + ": missing header");
  ++lineno;
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("T") || !header.contains("L") ||
      !header.contains("B") || !header.contains("K") || !header.contains("regime_trace"))
    throw DataError(name + ": missing or malformed header on line 1");

  ProblemInstance inst;
  try {
    const int T = header.at("T").get<int>();
    if (T < 1) throw DataError(name + ": header T must be >= 1");
    inst.slots.resize(T);
    inst.roi_limit = header.at("L").get<double>();
    inst.budget = header.at("B").is_null() ? kInf : header.at("B").get<double>();
    inst.num_regimes = header.at("K").get<int>();
    inst.regime_trace = header.at("regime_trace").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(name + ": line 1: bad header field: " + e.what());
  }
  if (!(inst.roi_limit > 0) || !(inst.budget > 0))
    throw DataError(name + ": line 1: L and B must be positive");

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw DataError(name + ": line " + std::to_string(lineno) + ": malformed record");
    auto slot_it = rec.find("slot");
    if (slot_it == rec.end() || !slot_it->is_number_integer())
      throw DataError(name + ": line " + std::to_string(lineno) + ": missing integer field 'slot'");
    Impression imp;
    imp.slot_index = slot_it->get<int>();
    imp.utility = detail::require_number(rec, "u", lineno);
    imp.delivery = detail::require_number(rec, "d", lineno);
    imp.market_price = detail::require_number(rec, "m", lineno);
    if (imp.slot_index < 0 || imp.slot_index >= inst.horizon())
      throw DataError(name + ": line " + std::to_string(lineno) + ": slot out of range");
    if (!(imp.utility > 0) || !(imp.market_price > 0) || !(imp.delivery >= 0))
      throw DataError(name + ": line " + std::to_string(lineno) + ": requires u > 0, m > 0, d >= 0");
    inst.slots[imp.slot_index].push_back(imp);
  }
  return inst;
}

inline ProblemInstance read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return read_dataset(in, path);
}

// ---------------------------------------------------------------------------
// JSON mapping for the market configuration (part of the experiment config file).

inline void to_json(nlohmann::json& j, const RegimeModel& r) {
  j = nlohmann::json{{"regime_id", r.regime_id},
                     {"price_ratio_log_mean", r.price_ratio_log_mean},
                     {"price_ratio_log_std", r.price_ratio_log_std},
                     {"arrival_rate", r.arrival_rate},
                     {"utility_log_mean", r.utility_log_mean},
                     {"utility_log_std", r.utility_log_std},
                     {"delivery_noise_log_std", r.delivery_noise_log_std}};
}

inline void from_json(const nlohmann::json& j, RegimeModel& r) {
  RegimeModel d;
  r.regime_id = j.value("regime_id", d.regime_id);
  r.price_ratio_log_mean = j.value("price_ratio_log_mean", d.price_ratio_log_mean);
  r.price_ratio_log_std = j.value("price_ratio_log_std", d.price_ratio_log_std);
  r.arrival_rate = j.value("arrival_rate", d.arrival_rate);
  r.utility_log_mean = j.value("utility_log_mean", d.utility_log_mean);
  r.utility_log_std = j.value("utility_log_std", d.utility_log_std);
  r.delivery_noise_log_std = j.value("delivery_noise_log_std", d.delivery_noise_log_std);
}

inline void to_json(nlohmann::json& j, const MarketConfig& c) {
  j = nlohmann::json{{"regimes", c.regimes},
                     {"transition_matrix", c.transition_matrix},
                     {"slots_per_day", c.slots_per_day},
                     {"seed", c.seed},
                     {"min_regime_separation", c.min_regime_separation}};
}

inline void from_json(const nlohmann::json& j, MarketConfig& c) {
  MarketConfig d;
  c.regimes = j.at("regimes").get<std::vector<RegimeModel>>();
  c.transition_matrix = j.at("transition_matrix").get<std::vector<std::vector<double>>>();
  c.slots_per_day = j.value("slots_per_day", d.slots_per_day);
  c.seed = j.value("seed", d.seed);
  c.min_regime_separation = j.value("min_regime_separation", d.min_regime_separation);
}

inline std::uint64_t fingerprint(const MarketConfig& config) {
  return fnv1a64(nlohmann::json(config).dump());
}

/// Two-regime benchmark market: cheap (median m/u = 0.5) and expensive (median m/u = 2.0)
/// regimes, about 50 impressions per slot, sticky per-slot switching.
inline MarketConfig default_market(std::uint64_t seed = 7) {
  MarketConfig c;
  RegimeModel cheap;
  cheap.regime_id = 0;
  cheap.price_ratio_log_mean = std::log(0.5);
  cheap.price_ratio_log_std = 0.35;
  cheap.arrival_rate = 50.0;
  cheap.utility_log_mean = 0.0;
  cheap.utility_log_std = 0.5;
  cheap.delivery_noise_log_std = 0.2;
  RegimeModel pricey = cheap;
  pricey.regime_id = 1;
  pricey.price_ratio_log_mean = std::log(2.0);
  c.regimes = {cheap, pricey};
  c.transition_matrix = {{0.96, 0.04}, {0.04, 0.96}};
  c.slots_per_day = 48;
  c.seed = seed;
  return c;
}

}  // namespace cbrl
