#include <cmath>

#include <gtest/gtest.h>

#include "cbrl/agents/bayes_agent.hpp"
#include "cbrl/agents/cem.hpp"
#include "cbrl/agents/pid.hpp"

using namespace cbrl;

namespace {

MarketConfig small_market() {
  MarketConfig m = default_market(3);
  m.slots_per_day = 4;
  for (auto& r : m.regimes) r.arrival_rate = 6.0;
  return m;
}

TrainConfig small_train_config() {
  TrainConfig c;
  c.market = small_market();
  c.grid = RatioGrid(1.0);
  c.oracle = {std::nullopt, 200};
  c.agent.hidden = 8;
  c.agent.batch_size = 8;
  c.agent.episodes_per_epoch = 4;
  c.agent.sync_every = 5;
  c.agent.update_every = 1;
  c.curriculum.final_stage_epochs = 2;
  c.seed = 21;
  return c;
}

MarketConfig single_regime(double log_mean) {
  MarketConfig m;
  RegimeModel r;
  r.price_ratio_log_mean = log_mean;
  r.price_ratio_log_std = 0.35;
  r.delivery_noise_log_std = 0.2;
  m.regimes = {r};
  m.transition_matrix = {{1.0}};
  m.slots_per_day = 48;
  return m;
}

}  // namespace

TEST(QNetwork, TdLossGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int point = 0; point < 10; ++point) {
    QNetwork q(9, 12, 5, rng);
    for (Eigen::Index i = 0; i < q.params().size(); ++i) q.params()[i] += 0.1 * g(rng);
    const int n = 6;
    Matrix x(9, n);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    std::vector<int> actions(n);
    std::vector<double> targets(n);
    for (int i = 0; i < n; ++i) {
      actions[i] = std::uniform_int_distribution<int>(0, 4)(rng);
      targets[i] = g(rng);
    }
    Vector grad;
    q.td_loss(x, actions, targets, &grad);
    Vector fd(grad.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < q.params().size(); ++i) {
      const double keep = q.params()[i];
      q.params()[i] = keep + h;
      const double up = q.td_loss(x, actions, targets, nullptr);
      q.params()[i] = keep - h;
      const double dn = q.td_loss(x, actions, targets, nullptr);
      q.params()[i] = keep;
      fd[i] = (up - dn) / (2 * h);
    }
    const double rel = (grad - fd).norm() / std::max(grad.norm(), fd.norm());
    EXPECT_LT(rel, 1e-4) << "point " << point;
  }
}

TEST(QNetwork, AdamMovesAgainstTheGradient) {
  Vector p = Vector::Constant(3, 1.0), g(3);
  g << 1.0, -2.0, 0.0;
  Adam opt(3);
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], 1.1, 1e-6);
  EXPECT_EQ(p[2], 1.0);
}

TEST(Agent, TdTargetExamples) {
  EXPECT_EQ(td_target(0.5, true, 9.0, 9.0), 0.5);
  EXPECT_DOUBLE_EQ(td_target(0.0, false, 0.3, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(td_target(0.0, false, 0.3, 0.5), 0.3);
  EXPECT_DOUBLE_EQ(td_target(1.0, false, 0.5, 0.4, 0.5), 1.2);
}

TEST(Agent, GreedyAndSoftmaxSelection) {
  Vector q = Vector::Zero(5);
  q[1] = 1.0;
  EXPECT_EQ(argmax_first(q), 1);
  EXPECT_EQ(argmax_first(Vector::Zero(5)), 0);
  Rng rng = make_rng(2);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += softmax_sample(q, 1e-3, rng) == 1;
  EXPECT_GE(hits, 9900);
  // High temperature spreads the choice.
  int spread[5] = {};
  for (int i = 0; i < 5000; ++i) ++spread[softmax_sample(q, 100.0, rng)];
  for (int c : spread) EXPECT_GT(c, 800);
}

TEST(Agent, HatBasisProjector) {
  const Matrix P = hat_basis_projector(41, 9);
  EXPECT_LT((P * P - P).norm(), 1e-10);
  EXPECT_LT((P - P.transpose()).norm(), 1e-10);
  Vector lin(41);
  for (int i = 0; i < 41; ++i) lin[i] = 0.3 * i - 2.0;
  EXPECT_LT((P * lin - lin).norm(), 1e-10);
  EXPECT_THROW(hat_basis_projector(41, 1), ConfigError);
}

TEST(Agent, AllZeroQBidsNothing) {
  const auto cfg = small_train_config();
  PolicyArtifact a = init_artifact(cfg.market, RatioGrid(0.5), cfg.agent, cfg.curriculum, {}, 1);
  a.q1 = QNetwork(a.q1.input_dim(), a.q1.hidden(), a.q1.actions());
  a.q2 = a.q1;
  const Day d = make_day(cfg.market, cfg.setting, 5, a.grid, cfg.oracle);
  BayesianPolicy p(a, BeliefMode::kPosterior);
  Rng rng = make_rng(1);
  const auto o = run_day(p, d.instance, d.normalizer(), rng);
  for (double r : o.ratios) EXPECT_EQ(r, 0.0);
  EXPECT_EQ(o.delivery, 0.0);
  EXPECT_EQ(o.cost, 0.0);
  EXPECT_TRUE(o.feasible);
}

TEST(Agent, ZeroEpisodesLeavesInitialization) {
  auto cfg = small_train_config();
  cfg.max_episodes = 0;
  const auto r = train(cfg);
  EXPECT_EQ(r.artifact, init_artifact(cfg.market, cfg.grid, cfg.agent, cfg.curriculum, cfg.env.clip, cfg.seed));
  EXPECT_EQ(r.artifact.episodes, 0);
}

TEST(Agent, TrainingIsDeterministic) {
  const auto cfg = small_train_config();
  const auto a = train(cfg);
  const auto b = train(cfg);
  EXPECT_EQ(serialize_artifact(a.artifact), serialize_artifact(b.artifact));
  EXPECT_EQ(a.artifact.episodes, 32);
  EXPECT_GT(a.artifact.updates, 0);
  EXPECT_FALSE(a.artifact.diverged);
  ASSERT_EQ(a.log.size(), 32u);
  EXPECT_EQ(a.log.front().stage, 0);
  EXPECT_EQ(a.log.back().stage, 2);
  auto other = cfg;
  other.seed = 22;
  EXPECT_NE(serialize_artifact(train(other).artifact), serialize_artifact(a.artifact));
}

TEST(Agent, BootstrapAndSmoothingOptionsTrain) {
  auto cfg = small_train_config();
  cfg.agent.bootstrap = Bootstrap::kMinOfMax;
  cfg.agent.feature_scaling = FeatureScaling::kClipBox;
  cfg.agent.output_knots = 3;
  cfg.agent.lr_milestones = {10, 20};
  const auto r = train(cfg);
  EXPECT_FALSE(r.artifact.diverged);
  EXPECT_EQ(r.artifact.scaler, FeatureScaler::from_clip(cfg.env.clip));
  // The projected output layer keeps Q piecewise linear in the action index.
  const Matrix P = hat_basis_projector(static_cast<int>(cfg.grid.size()), 3);
  const SlotObservation obs{};
  const Vector q = r.artifact.q1.forward_one(encode_input(r.artifact.scaler, 2, obs, 0));
  EXPECT_LT((P * q - q).norm(), 1e-9);
  cfg.agent.output_knots = 1;
  EXPECT_THROW(train(cfg), ConfigError);
}

TEST(Agent, ArtifactRoundTripIsByteIdentical) {
  const auto a = train(small_train_config()).artifact;
  const std::string s = serialize_artifact(a);
  const auto back = deserialize_artifact(s);
  EXPECT_EQ(back, a);
  EXPECT_EQ(serialize_artifact(back), s);
  EXPECT_THROW(deserialize_artifact("{}"), DataError);
  EXPECT_THROW(deserialize_artifact("nope"), DataError);
  std::string bad = s;
  bad.replace(bad.find(kArtifactVersion), std::string(kArtifactVersion).size(), "other/9");
  EXPECT_THROW(deserialize_artifact(bad), DataError);
}

TEST(Agent, EvaluationIsDeterministic) {
  const auto cfg = small_train_config();
  const auto a = train(cfg).artifact;
  std::vector<Day> days;
  for (std::uint64_t i = 0; i < 5; ++i) days.push_back(make_day(cfg.market, cfg.setting, 100 + i, cfg.grid, cfg.oracle));
  const auto x = evaluate(a, days, BeliefMode::kPosterior, 9);
  const auto y = evaluate(a, days, BeliefMode::kPosterior, 9);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].ratios, y[i].ratios);
    EXPECT_EQ(x[i].delivery, y[i].delivery);
  }
}

TEST(Agent, FrozenBeliefStaysUniform) {
  const auto cfg = small_train_config();
  const auto a = train(cfg).artifact;
  const Day d = make_day(cfg.market, cfg.setting, 3, cfg.grid, cfg.oracle);
  BayesianPolicy frozen(a, BeliefMode::kFrozenUniform);
  Rng rng = make_rng(4);
  run_day(frozen, d.instance, d.normalizer(), rng);
  EXPECT_EQ(frozen.belief().probs, std::vector<double>(2, 0.5));
}

TEST(Agent, HyperparamJson) {
  AgentHyperparams h;
  h.bootstrap = Bootstrap::kMinOfMax;
  h.output_knots = 9;
  h.lr_milestones = {5, 6};
  EXPECT_EQ(nlohmann::json(h).get<AgentHyperparams>(), h);
  nlohmann::json j = h;
  j["bootstrap"] = "optimistic";
  EXPECT_THROW(j.get<AgentHyperparams>(), ConfigError);
  j = h;
  j["feature_scaling"] = "none";
  EXPECT_THROW(j.get<AgentHyperparams>(), ConfigError);
}

TEST(Pid, SignConventions) {
  PidController pid;
  EXPECT_EQ(pid.step(1.0, 1.0, 1.7), 1.7);  // zero error
  pid.reset();
  EXPECT_EQ(pid.step(std::nullopt, 1.0, 1.7), 1.7);  // nothing spent yet
  pid.reset();
  EXPECT_GE(pid.step(1.5, 1.0, 1.0), 1.0);  // ROI above target: spend more
  pid.reset();
  EXPECT_LE(pid.step(0.5, 1.0, 1.0), 1.0);
  pid.reset();
  for (int i = 0; i < 100; ++i) pid.step(10.0, 1.0, 1.0);
  EXPECT_EQ(pid.integral(), pid.gains().integral_limit);
}

TEST(Pid, TracksTheTargetBetterThanUnitRatio) {
  const MarketConfig m = single_regime(std::log(0.5));
  PidPolicy pid;
  FixedRatioPolicy unit(1.0);
  double err_pid = 0.0, err_unit = 0.0;
  for (std::uint64_t d = 0; d < 100; ++d) {
    const auto inst = generate_day(m, {}, d);
    Rng r1 = make_rng(1, d), r2 = make_rng(1, d);
    err_pid += std::abs(run_day(pid, inst, 1.0, r1).roi - inst.roi_limit);
    err_unit += std::abs(run_day(unit, inst, 1.0, r2).roi - inst.roi_limit);
  }
  EXPECT_LT(err_pid, err_unit);
}

TEST(Cem, EqualScoresKeepTheMean) {
  CemSearch cem({4, 0.5, 1.3, 0.4, 0.05});
  Rng rng = make_rng(1);
  for (int i = 0; i < 4; ++i) {
    cem.sample(rng);
    cem.record(2.0);
  }
  EXPECT_EQ(cem.mean(), 1.3);
  EXPECT_EQ(cem.stddev(), 0.4);
}

TEST(Cem, FullEliteFractionGivesSampleMoments) {
  CemSearch cem({4, 1.0, 1.0, 1.0, 0.0});
  const std::vector<double> xs{0.5, 1.0, 2.0, 2.5};
  for (std::size_t i = 0; i < xs.size(); ++i) cem.record(xs[i], static_cast<double>(i));
  EXPECT_DOUBLE_EQ(cem.mean(), 1.5);
  EXPECT_DOUBLE_EQ(cem.stddev(), std::sqrt((1.0 + 0.25 + 0.25 + 1.0) / 4.0));
}

TEST(Cem, FindsTheBestRatioOnAStationaryMarket) {
  const MarketConfig m = single_regime(0.0);
  const RatioGrid grid(0.1);
  int close = 0;
  for (std::uint64_t d = 0; d < 100; ++d) {
    const auto inst = generate_day(m, {}, d);
    // Reference: the grid ratio with the largest whole-day surplus D - L*C.
    double best = -kInf, beta_star = 0.0;
    for (double b : grid.values()) {
      const auto l = replay_plan(inst, std::vector<double>(inst.horizon(), b));
      const double s = l.delivery - inst.roi_limit * l.cost;
      if (s > best) {
        best = s;
        beta_star = b;
      }
    }
    CemPolicy cem;
    Rng rng = make_rng(12, d);
    run_day(cem, inst, 1.0, rng);
    close += std::abs(cem.search().mean() - beta_star) <= 0.2;
  }
  EXPECT_GE(close, 80);
}
