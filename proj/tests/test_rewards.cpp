#include <cmath>

#include <gtest/gtest.h>

#include "cbrl/rewards.hpp"

using namespace cbrl;

namespace {

EpisodeLedger ledger_of(double d, double c) {
  EpisodeLedger l(1);
  l.delivery = d;
  l.cost = c;
  return l;
}

std::vector<SlotTotals> random_trace(Rng& rng, int T) {
  std::vector<SlotTotals> tr(T);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (auto& s : tr) {
    s.cost = u(rng);
    s.delivery = s.cost * std::uniform_real_distribution<double>(0.6, 1.8)(rng);
  }
  return tr;
}

}  // namespace

TEST(Rewards, TerminalRewardAndCost) {
  EXPECT_EQ(sparse_reward(ledger_of(10, 5), false, 0.0, 20.0), 0.0);
  EXPECT_EQ(sparse_cost(ledger_of(8, 10), false, 1.0, kInf), 0.0);
  EXPECT_DOUBLE_EQ(sparse_reward(ledger_of(10, 5), true, 0.0, 20.0), 0.5);
  EXPECT_EQ(sparse_cost(ledger_of(10, 5), true, 1.0, kInf), 0.0);
  EXPECT_NEAR(sparse_cost(ledger_of(8, 10), true, 1.0, kInf), 0.2, 1e-15);
  // Both violations add, each normalized by its own limit.
  EXPECT_NEAR(sparse_cost(ledger_of(8, 10), true, 1.0, 8.0), 0.2 + 0.25, 1e-15);
}

TEST(Rewards, IndicatorExamples) {
  EXPECT_DOUBLE_EQ(indicator_reward(ledger_of(10, 5), true, 0.0, 1.0, kInf, 20.0), 0.5);
  EXPECT_NEAR(indicator_reward(ledger_of(8, 10), true, 0.0, 1.0, kInf, 20.0), -0.2, 1e-15);
  EXPECT_EQ(indicator_reward(ledger_of(0, 0), true, 0.0, 1.0, kInf, 20.0), 0.0);
  EXPECT_EQ(indicator_reward(ledger_of(8, 10), false, 0.0, 1.0, kInf, 20.0), 0.0);
}

TEST(Rewards, HardBarrierOrderingUnderFuzz) {
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double min_feasible = kInf, max_infeasible = -kInf;
  int nf = 0, ni = 0;
  for (int i = 0; i < 10000; ++i) {
    const double c = 0.01 + 50.0 * u(rng);
    const double d = c * (0.3 + 1.5 * u(rng));
    const double L = 0.5 + u(rng);
    const double B = u(rng) < 0.5 ? kInf : 0.5 * c + c * u(rng);
    const double r = indicator_reward(ledger_of(d, c), true, 0.0, L, B, 1.0 + 100.0 * u(rng));
    if (feasibility(d, c, L, B).both) {
      min_feasible = std::min(min_feasible, r);
      ++nf;
    } else {
      max_infeasible = std::max(max_infeasible, r);
      ++ni;
    }
  }
  ASSERT_GT(nf, 1000);
  ASSERT_GT(ni, 1000);
  EXPECT_GT(min_feasible, 0.0);
  EXPECT_LE(max_infeasible, 0.0);
}

TEST(Curriculum, ScheduleEndpointsAndMidpoint) {
  const double L = 1.3, B = 250.0;
  for (const CurriculumStage st : {CurriculumStage{0.1, 0.95, 3}, CurriculumStage{0.2, 0.95, 3},
                                   CurriculumStage{0.7, 0.3, 1}}) {
    const auto end = curriculum_limits(48, 48, st, 3.0, L, B);
    EXPECT_EQ(end.roi_limit, L);
    EXPECT_EQ(end.budget_reserve, 0.0);
  }
  const CurriculumStage st{0.2, 0.95, 3};
  EXPECT_DOUBLE_EQ(curriculum_limits(0, 48, st, 3.0, 1.0, kInf).roi_limit, 0.8);
  EXPECT_DOUBLE_EQ(curriculum_limits(24, 48, st, 3.0, 1.0, kInf).roi_limit, 0.975);
  EXPECT_DOUBLE_EQ(curriculum_limits(0, 48, st, 3.0, 1.0, 100.0).budget_reserve, 95.0);
  EXPECT_EQ(curriculum_limits(10, 48, st, 3.0, 1.0, kInf).budget_reserve, 0.0);
}

TEST(Curriculum, DenseRewardExamples) {
  const CurriculumStage st{0.2, 0.95, 3};
  // At t = T the limit is L itself.
  EpisodeLedger l = ledger_of(5.0, 5.0);
  EXPECT_DOUBLE_EQ(dense_reward(l, 2.0, 48, 48, st, 3.0, 1.0, kInf, 20.0), 0.1);
  l = ledger_of(4.5, 5.0);
  EXPECT_NEAR(dense_reward(l, 2.0, 48, 48, st, 3.0, 1.0, kInf, 20.0), -0.1, 1e-12);
  // Early in the day the relaxed limit 0.8 accepts ROI 0.9.
  EXPECT_DOUBLE_EQ(dense_reward(l, 2.0, 0, 48, st, 3.0, 1.0, kInf, 20.0), 0.1);
  // Spending into the reserve is penalized by the excess over B.
  l = ledger_of(50.0, 20.0);
  const double cap = 100.0 - 0.95 * 100.0 * std::pow(1.0 - 1.0 / 48, 3.0);
  ASSERT_GT(20.0, cap);
  EXPECT_NEAR(dense_reward(l, 1.0, 1, 48, st, 3.0, 1.0, 100.0, 20.0), -(20.0 - cap) / 100.0, 1e-12);
}

TEST(Curriculum, SmoothIndicator) {
  EXPECT_DOUBLE_EQ(smooth_indicator(-std::sqrt(10.0), 10.0), 0.5);
  EXPECT_NEAR(smooth_indicator(0.0, 10.0), 1.0, 1e-9);
  EXPECT_EQ(smooth_indicator(1e6, 10.0), 1.0);
  // Increasing in x, a step at -sqrt(v) that sharpens as v grows.
  for (double v : {1.0, 10.0, 100.0}) {
    const double mid = -std::sqrt(v);
    double prev = 0.0;
    for (double x = mid - 3.0; x <= 2.0; x += 0.25) {
      const double s = smooth_indicator(x, v);
      EXPECT_GE(s, prev);
      prev = s;
    }
    EXPECT_LT(smooth_indicator(mid - 0.1, v), 0.5);
    EXPECT_GT(smooth_indicator(mid + 0.1, v), 0.5);
  }
  EXPECT_NEAR(smooth_indicator(-2.0 * std::sqrt(100.0), 100.0), 0.0, 1e-9);
  EXPECT_NEAR(smooth_indicator(-std::sqrt(100.0) + 0.5, 100.0), 1.0, 1e-9);
}

TEST(Curriculum, RegretMaskedOnInfeasibleEpisodes) {
  std::vector<SlotTotals> tr{{1.0, 2.0}, {1.0, 1.0}};  // ROI 2/3
  const auto r = curriculum_regret_loss(tr, {0.2, 0.95, 3}, 3.0, 10.0, 1.0, kInf, 2.0);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, 0.0);
}

TEST(Curriculum, RegretGradientMatchesFiniteDifference) {
  Rng rng = make_rng(5);
  int checked = 0;
  while (checked < 50) {
    const auto tr = random_trace(rng, 12);
    double D = 0, C = 0;
    for (const auto& s : tr) {
      D += s.delivery;
      C += s.cost;
    }
    const double L = std::uniform_real_distribution<double>(0.6, 1.0)(rng) * D / C;
    const double B = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5 ? kInf : 1.2 * C;
    CurriculumStage st{std::uniform_real_distribution<double>(0.05, 0.6)(rng), 0.5, 1};
    const double dstar = D * 1.3;
    const auto r = curriculum_regret_loss(tr, st, 3.0, 10.0, L, B, dstar);
    const double h = 1e-5;
    CurriculumStage up = st, dn = st;
    up.roi_relax += h;
    dn.roi_relax -= h;
    const double fd = (curriculum_regret_loss(tr, up, 3.0, 10.0, L, B, dstar).loss -
                       curriculum_regret_loss(tr, dn, 3.0, 10.0, L, B, dstar).loss) /
                      (2 * h);
    // Central differences carry ~1e-11 round-off, so tiny gradients are compared on a 1e-6 scale.
    const double scale = std::max({std::abs(fd), std::abs(r.grad), 1e-6});
    EXPECT_LE(std::abs(fd - r.grad) / scale, 1e-4) << "fd " << fd << " analytic " << r.grad;
    ++checked;
  }
}

TEST(Curriculum, RegretWithZeroRelaxation) {
  // b = 0: every slot limit is L, so the proxy reduces to the smoothed unrelaxed dense return.
  std::vector<SlotTotals> tr{{2.0, 1.0}, {1.0, 1.0}, {0.5, 0.5}};
  const double v = 10.0;
  const auto r = curriculum_regret_loss(tr, {0.0, 0.0, 1}, 3.0, v, 1.0, kInf, 4.0);
  double D = 0, C = 0, proxy = 0;
  for (const auto& s : tr) {
    D += s.delivery;
    C += s.cost;
    const double sm = 1.0 / (1.0 + std::exp(-v * (D / C - 1.0 + std::sqrt(v))));
    proxy += s.delivery / 4.0 * sm - (1.0 - sm) * (1.0 - D / C);
  }
  EXPECT_NEAR(r.loss, D / 4.0 - proxy, 1e-12);
}

TEST(Curriculum, AutoCurriculumStepsAgainstGradient) {
  std::vector<SlotTotals> tr{{2.0, 1.0}, {0.3, 1.0}, {1.0, 1.0}, {1.0, 0.2}};
  CurriculumStage st{0.3, 0.5, 1};
  const auto r = curriculum_regret_loss(tr, st, 3.0, 10.0, 1.0, kInf, 5.0);
  AutoCurriculum ac(0.01);
  ac.update(st, tr, 3.0, 10.0, 1.0, kInf, 5.0);
  EXPECT_NEAR(st.roi_relax, std::clamp(0.3 - 0.01 * r.grad, 0.0, 1.0), 1e-15);
}

TEST(Curriculum, ValidateAndJson) {
  auto s = default_curriculum();
  EXPECT_NO_THROW(validate(s));
  EXPECT_EQ(nlohmann::json(s).get<CurriculumSchedule>(), s);
  s.stages = {{0.3, 0.95, 3}, {0.1, 0.95, 3}};
  EXPECT_THROW(validate(s), ConfigError);
  s = default_curriculum();
  s.stages[0].roi_relax = 1.5;
  EXPECT_THROW(validate(s), ConfigError);
  s = default_curriculum();
  s.shape_exponent = 0.0;
  EXPECT_THROW(validate(s), ConfigError);
}
