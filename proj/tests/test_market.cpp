#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "cbrl/market.hpp"

using namespace cbrl;

namespace {

MarketConfig one_regime(double mu, double sigma, double arrival, double noise = 0.0) {
  MarketConfig c;
  RegimeModel r;
  r.price_ratio_log_mean = mu;
  r.price_ratio_log_std = sigma;
  r.arrival_rate = arrival;
  r.delivery_noise_log_std = noise;
  c.regimes = {r};
  c.transition_matrix = {{1.0}};
  c.slots_per_day = 48;
  return c;
}

// Standard normal cdf written out independently of the library helper.
double phi(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

}  // namespace

TEST(Auction, SecondPriceAndTiesLose) {
  const Impression imp{0, 1.0, 0.8, 0.6};
  auto w = run_auction(0.7, imp);
  EXPECT_TRUE(w.won);
  EXPECT_EQ(w.cost, 0.6);  // pays the competing price, not its bid
  EXPECT_EQ(w.delivery, 0.8);
  ASSERT_TRUE(w.revealed_price);
  EXPECT_EQ(*w.revealed_price, 0.6);

  auto tie = run_auction(0.6, imp);
  EXPECT_FALSE(tie.won);
  EXPECT_EQ(tie.cost, 0.0);
  EXPECT_FALSE(tie.revealed_price);
}

TEST(Market, PriceRatioMomentsMatchConfig) {
  const double mu = std::log(0.5), sigma = 0.35;
  const MarketConfig c = one_regime(mu, sigma, 50.0);
  double s = 0.0, s2 = 0.0;
  long n = 0;
  for (std::uint64_t d = 0; d < 40; ++d) {
    const auto inst = generate_day(c, {}, d);
    for (const auto& slot : inst.slots)
      for (const auto& imp : slot) {
        const double x = std::log(imp.market_price / imp.utility);
        s += x;
        s2 += x * x;
        ++n;
      }
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, mu, 0.05 * std::abs(mu));
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
}

TEST(Market, ArrivalsAndUtilityMoments) {
  const MarketConfig c = one_regime(0.0, 0.3, 50.0);
  long total = 0, slots = 0;
  double lu = 0.0;
  for (std::uint64_t d = 0; d < 40; ++d) {
    const auto inst = generate_day(c, {}, d);
    for (const auto& slot : inst.slots) {
      total += static_cast<long>(slot.size());
      ++slots;
      for (const auto& imp : slot) lu += std::log(imp.utility);
    }
  }
  const double rate = static_cast<double>(total) / slots;
  EXPECT_NEAR(rate, 50.0, 3.0 * std::sqrt(50.0 / slots));
  EXPECT_NEAR(lu / total, 0.0, 3.0 * 0.5 / std::sqrt(static_cast<double>(total)));
}

TEST(Market, DeliveryNoiseIsMeanOne) {
  const MarketConfig c = one_regime(0.0, 0.3, 50.0, 0.2);
  double s = 0.0;
  long n = 0;
  for (std::uint64_t d = 0; d < 20; ++d)
    for (const auto& slot : generate_day(c, {}, d).slots)
      for (const auto& imp : slot) {
        s += imp.delivery / imp.utility;
        ++n;
      }
  const double se = std::sqrt(std::exp(0.04) - 1.0) / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(s / n, 1.0, 4.0 * se);
}

TEST(Market, NoNoiseMeansDeliveryEqualsUtility) {
  const auto inst = generate_day(one_regime(0.0, 0.3, 20.0), {}, 3);
  for (const auto& slot : inst.slots)
    for (const auto& imp : slot) EXPECT_EQ(imp.delivery, imp.utility);
}

TEST(Market, WinRateMatchesLognormalCdf) {
  const double mu = std::log(2.0), sigma = 0.35;
  const MarketConfig c = one_regime(mu, sigma, 50.0);
  for (double beta : {1.0, 2.0, 3.0}) {
    long wins = 0, n = 0;
    for (std::uint64_t d = 0; d < 10; ++d)
      for (const auto& slot : generate_day(c, {}, d).slots)
        for (const auto& imp : slot) {
          wins += run_auction(beta * imp.utility, imp).won;
          ++n;
        }
    const double p = phi((std::log(beta) - mu) / sigma);
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(static_cast<double>(wins) / n, p, 3.0 * se) << "beta " << beta;
  }
}

TEST(Market, RegimeTransitionFrequencies) {
  MarketConfig c = default_market();
  c.transition_matrix = {{0.9, 0.1}, {0.3, 0.7}};
  Rng rng = make_rng(11);
  long from[2] = {0, 0}, stay[2] = {0, 0}, first0 = 0;
  const int days = 2000;
  for (int d = 0; d < days; ++d) {
    const auto tr = sample_regime_trace(c, 48, rng);
    first0 += tr[0] == 0;
    for (std::size_t t = 1; t < tr.size(); ++t) {
      ++from[tr[t - 1]];
      stay[tr[t - 1]] += tr[t] == tr[t - 1];
    }
  }
  for (int k = 0; k < 2; ++k) {
    const double p = c.transition_matrix[k][k];
    const double se = std::sqrt(p * (1 - p) / from[k]);
    EXPECT_NEAR(static_cast<double>(stay[k]) / from[k], p, 3.0 * se);
  }
  // Initial regime comes from the stationary law (0.75, 0.25).
  EXPECT_NEAR(static_cast<double>(first0) / days, 0.75, 3.0 * std::sqrt(0.75 * 0.25 / days));
}

TEST(Market, StationaryDistribution) {
  const auto pi = stationary_distribution({{0.9, 0.1}, {0.3, 0.7}});
  ASSERT_EQ(pi.size(), 2u);
  EXPECT_NEAR(pi[0], 0.75, 1e-12);
  EXPECT_NEAR(pi[1], 0.25, 1e-12);
  const auto u = stationary_distribution({{0.96, 0.04}, {0.04, 0.96}});
  EXPECT_NEAR(u[0], 0.5, 1e-12);
}

TEST(Market, DeterministicPerSeed) {
  const MarketConfig c = default_market(7);
  EXPECT_EQ(generate_day(c, {}, 5), generate_day(c, {}, 5));
  EXPECT_NE(generate_day(c, {}, 5), generate_day(c, {}, 6));
  EXPECT_NE(generate_day(c, {}, 5), generate_day(default_market(8), {}, 5));
}

TEST(Market, PrescribedTraceIsUsed) {
  const MarketConfig c = default_market();
  std::vector<int> tr(48, 0);
  for (int t = 24; t < 48; ++t) tr[t] = 1;
  const auto inst = generate_day_with_trace(c, {}, tr, 1);
  EXPECT_EQ(inst.regime_trace, tr);
  double lo = 0.0, hi = 0.0;
  long nlo = 0, nhi = 0;
  for (int t = 0; t < 48; ++t)
    for (const auto& imp : inst.slots[t]) {
      (t < 24 ? lo : hi) += std::log(imp.market_price / imp.utility);
      (t < 24 ? nlo : nhi) += 1;
    }
  EXPECT_NEAR(lo / nlo, std::log(0.5), 0.05);
  EXPECT_NEAR(hi / nhi, std::log(2.0), 0.05);
  EXPECT_THROW(generate_day_with_trace(c, {}, std::vector<int>(47, 0), 1), ConfigError);
  EXPECT_THROW(generate_day_with_trace(c, {}, std::vector<int>(48, 2), 1), ConfigError);
}

TEST(Market, ValidateRejectsBadConfigs) {
  EXPECT_NO_THROW(validate(default_market()));
  auto c = default_market();
  c.transition_matrix[0] = {0.5, 0.4};
  EXPECT_THROW(validate(c), ConfigError);
  c = default_market();
  c.regimes[1].price_ratio_log_mean = c.regimes[0].price_ratio_log_mean + 0.01;
  EXPECT_THROW(validate(c), ConfigError);
  c = default_market();
  c.regimes[0].price_ratio_log_std = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = default_market();
  c.slots_per_day = 1;
  EXPECT_THROW(validate(c), ConfigError);
  c = default_market();
  c.regimes[1].regime_id = 0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Dataset, RoundTripIsExact) {
  auto inst = generate_day(default_market(), {1.2, 345.5}, 9);
  std::stringstream ss;
  write_dataset(inst, ss);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back, inst);

  inst.budget = kInf;
  std::stringstream s2;
  write_dataset(inst, s2);
  EXPECT_TRUE(std::isinf(read_dataset(s2).budget));
}

TEST(Dataset, ErrorsNameTheLine) {
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    try {
      read_dataset(in, "x");
      ADD_FAILURE() << "no error for: " << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  const std::string header = R"({"T":2,"L":1,"B":null,"K":2,"regime_trace":[0,1]})" "\n";
  expect_error("", "missing header");
  expect_error("{\"T\":2}\n", "line 1");
  expect_error(header + R"({"slot":0,"u":1,"d":1,"m":1})" "\n" "not json\n", "line 3");
  expect_error(header + R"({"slot":5,"u":1,"d":1,"m":1})" "\n", "out of range");
  expect_error(header + R"({"slot":0,"u":0,"d":1,"m":1})" "\n", "line 2");
  expect_error(header + R"({"slot":0,"d":1,"m":1})" "\n", "'u'");
  expect_error(R"({"T":2,"L":-1,"B":null,"K":2,"regime_trace":[0,1]})" "\n", "positive");
}

TEST(Market, JsonRoundTripAndFingerprint) {
  const auto c = default_market(3);
  const auto back = nlohmann::json(c).get<MarketConfig>();
  EXPECT_EQ(back, c);
  EXPECT_EQ(fingerprint(back), fingerprint(c));
  EXPECT_NE(fingerprint(default_market(4)), fingerprint(c));
}

TEST(Market, PriceRatioMeanPerRegime) {
  const MarketConfig c = default_market();
  for (int k = 0; k < 2; ++k) {
    const auto& r = c.regimes[k];
    double s = 0.0;
    long n = 0;
    for (std::uint64_t d = 0; n < 10000; ++d) {
      const auto inst = generate_day_with_trace(c, {}, std::vector<int>(48, k), d);
      for (const auto& slot : inst.slots)
        for (const auto& imp : slot) {
          s += imp.market_price / imp.utility;
          ++n;
        }
    }
    const double expected = std::exp(r.price_ratio_log_mean + 0.5 * r.price_ratio_log_std * r.price_ratio_log_std);
    EXPECT_NEAR(s / n, expected, 0.05 * expected) << "regime " << k;
  }
}

TEST(Auction, ZeroBidLoses) {
  const auto o = run_auction(0.0, {0, 1.0, 1.0, 1e-9});
  EXPECT_FALSE(o.won);
  EXPECT_EQ(o.delivery, 0.0);
}

TEST(Dataset, HeaderOnlyGivesEmptySlots) {
  std::istringstream in(R"({"T":3,"L":1,"B":null,"K":1,"regime_trace":[0,0,0]})" "\n");
  const auto inst = read_dataset(in);
  EXPECT_EQ(inst.horizon(), 3);
  EXPECT_EQ(inst.num_impressions(), 0u);
}
