#pragma once

// Curriculum-trained Bayesian bidder: double Q-learning over a discrete ratio grid, conditioned on
// a regime hypothesis drawn each slot from a Bayes filter over the market regimes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrl/agents/policy.hpp"
#include "cbrl/agents/qnet.hpp"
#include "cbrl/belief.hpp"
#include "cbrl/env.hpp"
#include "cbrl/market.hpp"
#include "cbrl/oracle.hpp"
#include "cbrl/rewards.hpp"
#include "cbrl/scenario.hpp"

namespace cbrl {

inline constexpr const char* kArtifactVersion = "cbrl-policy/1";

// How the next-state value is bootstrapped from the two target networks.
enum class Bootstrap {
  kMinOfMax,        // min(max_a Q1'(s', a), max_a Q2'(s', a))
  kElementwiseMin,  // max_a min(Q1'(s', a), Q2'(s', a))
};

enum class FeatureScaling {
  kClipBox,  // map each clip box onto [-1, 1]
  kTypical,  // center and spread sized to the typical range of each feature
};

struct AgentHyperparams {
  int hidden = 64;
  double learning_rate = 3e-4;
  std::vector<int> lr_milestones{};  // update counts at which the rate is multiplied by lr_decay
  double lr_decay = 0.5;
  int batch_size = 256;
  int buffer_capacity = 100000;
  int sync_every = 100;   // updates between target syncs
  int update_every = 4;   // env steps between updates
  double temperature_start = 1.0;
  double temperature_end = 0.05;
  int temperature_anneal_episodes = 0;  // 0: length of the dense curriculum stages
  int episodes_per_epoch = 500;
  double gamma = 1.0;
  double divergence_limit = 1e3;
  bool auto_curriculum = false;
  double curriculum_learning_rate = 3e-3;
  Bootstrap bootstrap = Bootstrap::kElementwiseMin;
  FeatureScaling feature_scaling = FeatureScaling::kTypical;
  // > 1: after every step the output layer is projected onto piecewise-linear functions of the
  // action index with this many evenly spaced knots. 0 disables.
  int output_knots = 17;

  bool operator==(const AgentHyperparams&) const = default;
};

/// Affine map of the clipped feature box onto [-1, 1].
struct FeatureScaler {
  std::array<double, kNumFeatures> center{};
  std::array<double, kNumFeatures> scale{};

  static FeatureScaler from_clip(const ObservationClip& clip) {
    FeatureScaler s;
    for (int i = 0; i < kNumFeatures; ++i) {
      s.center[i] = 0.5 * (clip.ranges[i].lo + clip.ranges[i].hi);
      s.scale[i] = 0.5 * (clip.ranges[i].hi - clip.ranges[i].lo);
    }
    return s;
  }
  /// Centers and spreads sized to the typical range of each feature rather than its clip box.
  static FeatureScaler typical() {
    FeatureScaler s;
    s.center = {0.5, 2.0, 0.0, 0.75, 0.0, 1.0, 0.0};
    s.scale = {0.5, 2.0, 0.5, 0.75, 0.5, 1.0, 0.25};
    return s;
  }
  bool operator==(const FeatureScaler&) const = default;
};

enum class ActMode { kTrain, kEval };
enum class BeliefMode { kPosterior, kFrozenUniform };

struct Transition {
  SlotObservation obs;
  int z = 0;
  int action = 0;
  double reward = 0.0;
  SlotObservation next_obs;
  bool done = false;
};

/// Everything needed to act: the four Q estimators, grid, scaler and the regime family the
/// filter assumes.
struct PolicyArtifact {
  std::string version = kArtifactVersion;
  QNetwork q1, q2, q1_target, q2_target;
  RatioGrid grid;
  FeatureScaler scaler;
  ObservationClip clip;
  MarketConfig market;
  std::uint64_t market_fingerprint = 0;
  CurriculumSchedule curriculum;
  std::uint64_t seed = 0;
  int episodes = 0;
  long updates = 0;
  bool diverged = false;

  int num_regimes() const { return market.num_regimes(); }
  bool operator==(const PolicyArtifact& o) const {
    return version == o.version && q1 == o.q1 && q2 == o.q2 && q1_target == o.q1_target &&
           q2_target == o.q2_target && grid == o.grid && scaler == o.scaler && market == o.market &&
           market_fingerprint == o.market_fingerprint && curriculum == o.curriculum && seed == o.seed &&
           episodes == o.episodes && updates == o.updates && diverged == o.diverged;
  }
};

inline Vector encode_input(const FeatureScaler& scaler, int num_regimes, const SlotObservation& obs, int z) {
  Vector x = Vector::Zero(kNumFeatures + num_regimes);
  for (int i = 0; i < kNumFeatures; ++i) x[i] = (obs.features[i] - scaler.center[i]) / scaler.scale[i];
  x[kNumFeatures + z] = 1.0;
  return x;
}

/// Bootstrapped target with the pessimistic (min) of the two target estimators.
inline double td_target(double reward, bool done, double target1_max, double target2_max, double gamma = 1.0) {
  if (done) return reward;
  return reward + gamma * std::min(target1_max, target2_max);
}

inline double td_target(const Transition& tr, const QNetwork& target1, const QNetwork& target2,
                        const FeatureScaler& scaler, int num_regimes, double gamma = 1.0) {
  if (tr.done) return tr.reward;
  const Vector x = encode_input(scaler, num_regimes, tr.next_obs, tr.z);
  return td_target(tr.reward, false, target1.forward_one(x).maxCoeff(), target2.forward_one(x).maxCoeff(), gamma);
}

/// Greedy index with ties to the smaller index.
/// Orthogonal projector onto hat functions of the action index with `knots` evenly spaced knots.
inline Matrix hat_basis_projector(int actions, int knots) {
  if (knots < 2 || knots > actions) throw ConfigError("output_knots must be 0 or in [2, number of actions]");
  Matrix B(actions, knots);
  for (int r = 0; r < actions; ++r)
    for (int k = 0; k < knots; ++k) {
      const double pos = actions > 1 ? static_cast<double>(r) / (actions - 1) * (knots - 1) : 0.0;
      B(r, k) = std::max(0.0, 1.0 - std::abs(pos - k));
    }
  return B * (B.transpose() * B).inverse() * B.transpose();
}

inline int argmax_first(const Vector& q) {
  int best = 0;
  for (int i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

/// Softmax(q / temperature) sample.
inline int softmax_sample(const Vector& q, double temperature, Rng& rng) {
  const double mx = q.maxCoeff();
  std::vector<double> p(q.size());
  double sum = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    p[i] = std::exp((q[i] - mx) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return sample_categorical(p, rng);
}

inline Vector q_values(const PolicyArtifact& a, const SlotObservation& obs, int z) {
  const Vector x = encode_input(a.scaler, a.num_regimes(), obs, z);
  return 0.5 * (a.q1.forward_one(x) + a.q2.forward_one(x));
}

inline int act(const PolicyArtifact& a, const SlotObservation& obs, int z, ActMode mode, double temperature,
               Rng& rng) {
  const Vector q = q_values(a, obs, z);
  return mode == ActMode::kEval ? argmax_first(q) : softmax_sample(q, temperature, rng);
}

inline PolicyArtifact init_artifact(const MarketConfig& market, const RatioGrid& grid, const AgentHyperparams& hp,
                                    const CurriculumSchedule& curriculum, const ObservationClip& clip,
                                    std::uint64_t seed) {
  validate(market);
  PolicyArtifact a;
  Rng rng = make_rng(seed, 0x1417ULL);
  const int in = kNumFeatures + market.num_regimes();
  const int out = static_cast<int>(grid.size());
  a.q1 = QNetwork(in, hp.hidden, out, rng);
  a.q2 = QNetwork(in, hp.hidden, out, rng);
  a.q1_target = a.q1;
  a.q2_target = a.q2;
  a.grid = grid;
  a.clip = clip;
  a.scaler = hp.feature_scaling == FeatureScaling::kTypical ? FeatureScaler::typical() : FeatureScaler::from_clip(clip);
  a.market = market;
  a.market_fingerprint = fingerprint(market);
  a.curriculum = curriculum;
  a.seed = seed;
  return a;
}

/// Uniform-sampling ring buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) { data_.reserve(std::min<std::size_t>(capacity, 1 << 16)); }

  void push(Transition tr) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(tr));
    } else {
      data_[head_] = std::move(tr);
      head_ = (head_ + 1) % capacity_;
    }
  }
  std::size_t size() const { return data_.size(); }
  void clear() {
    data_.clear();
    head_ = 0;
  }
  const Transition& sample(Rng& rng) const {
    return data_[std::uniform_int_distribution<std::size_t>(0, data_.size() - 1)(rng)];
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

/// Acting wrapper usable with run_day: Thompson-samples a regime hypothesis per slot.
class BayesianPolicy : public SlotPolicy {
 public:
  BayesianPolicy(const PolicyArtifact& artifact, BeliefMode belief_mode, ActMode act_mode = ActMode::kEval,
                 double temperature = 1.0)
      : a_(artifact), belief_mode_(belief_mode), act_mode_(act_mode), temperature_(temperature) {}

  void begin_day(const ProblemInstance&, Rng&) override { belief_ = init_belief(a_.num_regimes()); }

  double choose_ratio(const SlotObservation& obs, const EpisodeLedger&, Rng& rng) override {
    last_z_ = thompson_sample(belief_, rng);
    last_action_ = act(a_, obs, last_z_, act_mode_, temperature_, rng);
    return a_.grid[last_action_];
  }

  void observe(const SlotSummary& s, const EpisodeLedger&) override {
    if (belief_mode_ == BeliefMode::kFrozenUniform) return;
    belief_ = update_belief(belief_, s.evidence, a_.market.regimes, a_.market.transition_matrix).belief;
  }

  const Belief& belief() const { return belief_; }
  int last_z() const { return last_z_; }
  int last_action() const { return last_action_; }

 private:
  const PolicyArtifact& a_;
  BeliefMode belief_mode_;
  ActMode act_mode_;
  double temperature_;
  Belief belief_;
  int last_z_ = 0;
  int last_action_ = 0;
};

struct TrainConfig {
  MarketConfig market;
  ConstraintSetting setting;
  CurriculumSchedule curriculum = default_curriculum();
  AgentHyperparams agent;
  RatioGrid grid;
  OracleOptions oracle{std::nullopt, 2000};
  EnvOptions env;
  std::uint64_t seed = 1;
  std::optional<int> max_episodes;  // truncates the schedule
  std::uint64_t day_id_offset = 0;  // training day ids start here
};

struct EpisodeLog {
  int episode = 0;
  int stage = 0;                // index into the dense stages; == stages.size() for the final stage
  double train_return = 0.0;    // sum of the rewards the agent was trained on
  double barrier_return = 0.0;  // hard-barrier return of the same episode
  bool feasible = false;
  double delivery = 0.0;
  double cost = 0.0;
  double oracle_value = 0.0;
  double curriculum_b = 0.0;
};

struct TrainResult {
  PolicyArtifact artifact;
  std::vector<EpisodeLog> log;
};

namespace detail {

struct StagePlan {
  int episodes = 0;
  bool sparse = true;
  CurriculumStage stage{0.0, 0.0, 1};
};

inline std::vector<StagePlan> plan_stages(const CurriculumSchedule& c, int per_epoch) {
  std::vector<StagePlan> plan;
  for (const auto& s : c.stages) plan.push_back({s.epochs * per_epoch, false, s});
  plan.push_back({c.final_stage_epochs * per_epoch, c.final_stage_is_sparse, CurriculumStage{0.0, 0.0, 1}});
  return plan;
}

}  // namespace detail

/// Trains through the curriculum. Deterministic given the config. `on_episode` (optional) sees
/// every episode log as it is produced.
inline TrainResult train(const TrainConfig& cfg, const std::function<void(const EpisodeLog&)>& on_episode = {}) {
  validate(cfg.market);
  validate(cfg.curriculum);
  const AgentHyperparams& hp = cfg.agent;
  if (hp.batch_size < 1 || hp.update_every < 1 || hp.sync_every < 1 || hp.episodes_per_epoch < 1)
    throw ConfigError("agent batch_size, update_every, sync_every and episodes_per_epoch must be >= 1");
  if (hp.output_knots == 1 || hp.output_knots < 0) throw ConfigError("output_knots must be 0 or >= 2");

  TrainResult result;
  PolicyArtifact& a = result.artifact;
  a = init_artifact(cfg.market, cfg.grid, hp, cfg.curriculum, cfg.env.clip, cfg.seed);
  const int K = a.num_regimes();
  const int in = kNumFeatures + K;

  auto plan = detail::plan_stages(cfg.curriculum, hp.episodes_per_epoch);
  int total = 0;
  for (const auto& p : plan) total += p.episodes;
  if (cfg.max_episodes) total = std::min(total, *cfg.max_episodes);
  int anneal = hp.temperature_anneal_episodes;
  if (anneal <= 0) {
    for (const auto& p : plan)
      if (!p.sparse) anneal += p.episodes;
    if (anneal <= 0) anneal = 6 * hp.episodes_per_epoch;
  }

  Rng rng = make_rng(cfg.seed, 0x7a11ULL);
  ReplayBuffer buffer(static_cast<std::size_t>(hp.buffer_capacity));
  Adam opt1(a.q1.num_params()), opt2(a.q2.num_params());
  const AutoCurriculum auto_cl(hp.curriculum_learning_rate);
  long steps = 0;

  Matrix x(in, hp.batch_size), xn(in, hp.batch_size);
  std::vector<int> actions(hp.batch_size);
  std::vector<double> targets(hp.batch_size), rewards(hp.batch_size);
  std::vector<char> dones(hp.batch_size);
  Vector grad;
  // With at least as many knots as actions the projection is the identity and is skipped.
  const int num_actions = static_cast<int>(cfg.grid.size());
  const bool smooth = hp.output_knots > 0 && hp.output_knots < num_actions;
  const Matrix smoother = smooth ? hat_basis_projector(num_actions, hp.output_knots) : Matrix();

  // One TD step on `q` from its own minibatch; returns max |Q| over the batch.
  auto fit = [&](QNetwork& q, Adam& opt, double lr) {
    for (int i = 0; i < hp.batch_size; ++i) {
      const Transition& tr = buffer.sample(rng);
      x.col(i) = encode_input(a.scaler, K, tr.obs, tr.z);
      xn.col(i) = encode_input(a.scaler, K, tr.next_obs, tr.z);
      actions[i] = tr.action;
      rewards[i] = tr.reward;
      dones[i] = tr.done;
    }
    const Matrix t1 = a.q1_target.forward(xn);
    const Matrix t2 = a.q2_target.forward(xn);
    for (int i = 0; i < hp.batch_size; ++i) {
      if (hp.bootstrap == Bootstrap::kMinOfMax) {
        targets[i] = td_target(rewards[i], dones[i], t1.col(i).maxCoeff(), t2.col(i).maxCoeff(), hp.gamma);
      } else {
        const double v = t1.col(i).cwiseMin(t2.col(i)).maxCoeff();
        targets[i] = td_target(rewards[i], dones[i], v, v, hp.gamma);
      }
    }
    q.td_loss(x, actions, targets, &grad);
    opt.step(q.params(), grad, lr);
    if (smooth) q.project_output(smoother);
    return q.forward(x).cwiseAbs().maxCoeff();
  };

  auto update = [&]() -> bool {
    int decays = 0;
    for (int m : hp.lr_milestones)
      if (a.updates >= m) ++decays;
    const double lr = hp.learning_rate * std::pow(hp.lr_decay, decays);
    const double qmax = std::max(fit(a.q1, opt1, lr), fit(a.q2, opt2, lr));
    ++a.updates;
    if (a.updates % hp.sync_every == 0) {
      a.q1_target = a.q1;
      a.q2_target = a.q2;
    }
    return qmax <= hp.divergence_limit;
  };

  int episode = 0;
  BiddingEnv env(cfg.env);
  for (std::size_t si = 0; si < plan.size() && episode < total && !a.diverged; ++si) {
    detail::StagePlan& sp = plan[si];
    for (int e = 0; e < sp.episodes && episode < total && !a.diverged; ++e, ++episode) {
      const Day day = make_day(cfg.market, cfg.setting, cfg.day_id_offset + static_cast<std::uint64_t>(episode),
                               cfg.grid, cfg.oracle);
      const ProblemInstance& inst = day.instance;
      const double norm = day.normalizer();
      const int T = inst.horizon();
      const double temperature =
          episode >= anneal ? hp.temperature_end
                            : hp.temperature_start +
                                  (hp.temperature_end - hp.temperature_start) * episode / static_cast<double>(anneal);

      Belief belief = init_belief(K);
      SlotObservation obs = env.reset(inst, norm);
      EpisodeLog log;
      log.episode = episode;
      log.stage = static_cast<int>(si);
      log.curriculum_b = sp.stage.roi_relax;
      std::vector<SlotTotals> trace;
      while (!env.done()) {
        const int z = thompson_sample(belief, rng);
        const int action = act(a, obs, z, ActMode::kTrain, temperature, rng);
        StepResult step = env.step(a.grid[action]);
        const EpisodeLedger& ledger = env.ledger();
        trace.push_back({step.summary.delivery, step.summary.cost});
        double reward;
        if (sp.sparse)
          reward = indicator_reward(ledger, step.done, 0.0, inst.roi_limit, inst.budget, norm);
        else
          reward = dense_reward(ledger, step.summary.delivery, ledger.current_slot, T, sp.stage,
                                cfg.curriculum.shape_exponent, inst.roi_limit, inst.budget, norm);
        log.train_return += reward;
        buffer.push({obs, z, action, reward, step.observation, step.done});
        belief = update_belief(belief, step.summary.evidence, a.market.regimes, a.market.transition_matrix).belief;
        obs = step.observation;
        ++steps;
        if (static_cast<int>(buffer.size()) >= hp.batch_size && steps % hp.update_every == 0) {
          if (!update()) {
            a.diverged = true;
            break;
          }
        }
      }
      const EpisodeLedger& ledger = env.ledger();
      log.barrier_return = indicator_reward(ledger, true, 0.0, inst.roi_limit, inst.budget, norm);
      log.feasible = feasibility(ledger, inst.roi_limit, inst.budget).both;
      log.delivery = ledger.delivery;
      log.cost = ledger.cost;
      log.oracle_value = day.oracle_value();
      if (hp.auto_curriculum && !sp.sparse)
        auto_cl.update(sp.stage, trace, cfg.curriculum.shape_exponent, cfg.curriculum.smoothness, inst.roi_limit,
                       inst.budget, norm);
      result.log.push_back(log);
      if (on_episode) on_episode(log);
    }
  }
  a.episodes = episode;
  for (std::size_t si = 0; si < cfg.curriculum.stages.size(); ++si) a.curriculum.stages[si] = plan[si].stage;
  return result;
}

/// Greedy posterior-sampling rollouts, one independent generator per day.
inline std::vector<DayOutcome> evaluate(const PolicyArtifact& artifact, std::span<const Day> days, BeliefMode mode,
                                        std::uint64_t seed, EnvOptions env_options = {}) {
  std::vector<DayOutcome> out;
  out.reserve(days.size());
  BayesianPolicy policy(artifact, mode, ActMode::kEval);
  for (const Day& d : days) {
    Rng rng = make_rng(seed, d.id);
    out.push_back(run_day(policy, d.instance, d.normalizer(), rng, env_options));
  }
  return out;
}

inline void to_json(nlohmann::json& j, Bootstrap b) {
  j = b == Bootstrap::kMinOfMax ? "min_of_max" : "elementwise_min";
}
inline void from_json(const nlohmann::json& j, Bootstrap& b) {
  const auto s = j.get<std::string>();
  if (s == "min_of_max") b = Bootstrap::kMinOfMax;
  else if (s == "elementwise_min") b = Bootstrap::kElementwiseMin;
  else throw ConfigError("unknown bootstrap '" + s + "' (expected min_of_max or elementwise_min)");
}

inline void to_json(nlohmann::json& j, FeatureScaling f) { j = f == FeatureScaling::kClipBox ? "clip_box" : "typical"; }
inline void from_json(const nlohmann::json& j, FeatureScaling& f) {
  const auto s = j.get<std::string>();
  if (s == "clip_box") f = FeatureScaling::kClipBox;
  else if (s == "typical") f = FeatureScaling::kTypical;
  else throw ConfigError("unknown feature_scaling '" + s + "' (expected clip_box or typical)");
}

inline void to_json(nlohmann::json& j, const AgentHyperparams& h) {
  j = nlohmann::json{{"hidden", h.hidden},
                     {"learning_rate", h.learning_rate},
                     {"lr_milestones", h.lr_milestones},
                     {"lr_decay", h.lr_decay},
                     {"batch_size", h.batch_size},
                     {"buffer_capacity", h.buffer_capacity},
                     {"sync_every", h.sync_every},
                     {"update_every", h.update_every},
                     {"temperature_start", h.temperature_start},
                     {"temperature_end", h.temperature_end},
                     {"temperature_anneal_episodes", h.temperature_anneal_episodes},
                     {"episodes_per_epoch", h.episodes_per_epoch},
                     {"gamma", h.gamma},
                     {"divergence_limit", h.divergence_limit},
                     {"auto_curriculum", h.auto_curriculum},
                     {"curriculum_learning_rate", h.curriculum_learning_rate},
                     {"bootstrap", h.bootstrap},
                     {"feature_scaling", h.feature_scaling},
                     {"output_knots", h.output_knots}};
}

inline void from_json(const nlohmann::json& j, AgentHyperparams& h) {
  const AgentHyperparams d;
  h.hidden = j.value("hidden", d.hidden);
  h.learning_rate = j.value("learning_rate", d.learning_rate);
  h.lr_milestones = j.value("lr_milestones", d.lr_milestones);
  h.lr_decay = j.value("lr_decay", d.lr_decay);
  h.batch_size = j.value("batch_size", d.batch_size);
  h.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  h.sync_every = j.value("sync_every", d.sync_every);
  h.update_every = j.value("update_every", d.update_every);
  h.temperature_start = j.value("temperature_start", d.temperature_start);
  h.temperature_end = j.value("temperature_end", d.temperature_end);
  h.temperature_anneal_episodes = j.value("temperature_anneal_episodes", d.temperature_anneal_episodes);
  h.episodes_per_epoch = j.value("episodes_per_epoch", d.episodes_per_epoch);
  h.gamma = j.value("gamma", d.gamma);
  h.divergence_limit = j.value("divergence_limit", d.divergence_limit);
  h.auto_curriculum = j.value("auto_curriculum", d.auto_curriculum);
  h.curriculum_learning_rate = j.value("curriculum_learning_rate", d.curriculum_learning_rate);
  h.bootstrap = j.value("bootstrap", d.bootstrap);
  h.feature_scaling = j.value("feature_scaling", d.feature_scaling);
  h.output_knots = j.value("output_knots", d.output_knots);
}

// ---------------------------------------------------------------------------
// Artifact file: a JSON document. Parameter tensors are flat arrays in storage order with
// their shapes alongside; doubles are written in shortest round-trip form.

namespace detail {

inline nlohmann::ordered_json network_json(const QNetwork& q) {
  nlohmann::ordered_json j;
  j["shapes"] = q.shapes();
  j["params"] = std::vector<double>(q.params().data(), q.params().data() + q.params().size());
  return j;
}

inline QNetwork network_from_json(const nlohmann::json& j) {
  const auto shapes = j.at("shapes").get<std::vector<std::vector<int>>>();
  if (shapes.size() != 6 || shapes[0].size() != 2 || shapes[4].size() != 2)
    throw DataError("artifact: unexpected network layout");
  QNetwork q(shapes[0][1], shapes[0][0], shapes[4][0]);
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != q.num_params()) throw DataError("artifact: parameter count mismatch");
  q.params() = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
  return q;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace detail

inline std::string serialize_artifact(const PolicyArtifact& a) {
  nlohmann::ordered_json j;
  j["version"] = a.version;
  j["action_grid"] = std::vector<double>(a.grid.values().begin(), a.grid.values().end());
  nlohmann::ordered_json scaler;
  scaler["center"] = a.scaler.center;
  scaler["scale"] = a.scaler.scale;
  j["feature_scaler"] = scaler;
  std::vector<std::array<double, 2>> clip;
  for (const auto& r : a.clip.ranges) clip.push_back({r.lo, r.hi});
  j["feature_clip"] = clip;
  j["market"] = nlohmann::json(a.market);
  j["market_fingerprint"] = detail::hex64(a.market_fingerprint);
  j["curriculum"] = nlohmann::json(a.curriculum);
  nlohmann::ordered_json training;
  training["seed"] = a.seed;
  training["episodes"] = a.episodes;
  training["updates"] = a.updates;
  training["diverged"] = a.diverged;
  j["training"] = training;
  j["q1"] = detail::network_json(a.q1);
  j["q2"] = detail::network_json(a.q2);
  j["q1_target"] = detail::network_json(a.q1_target);
  j["q2_target"] = detail::network_json(a.q2_target);
  return j.dump() + "\n";
}

inline PolicyArtifact deserialize_artifact(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("artifact: not a JSON document");
  try {
    PolicyArtifact a;
    a.version = j.at("version").get<std::string>();
    if (a.version != kArtifactVersion) throw DataError("artifact: unsupported version " + a.version);
    a.grid = RatioGrid(j.at("action_grid").get<std::vector<double>>());
    a.scaler.center = j.at("feature_scaler").at("center").get<std::array<double, kNumFeatures>>();
    a.scaler.scale = j.at("feature_scaler").at("scale").get<std::array<double, kNumFeatures>>();
    const auto clip = j.at("feature_clip").get<std::vector<std::array<double, 2>>>();
    if (clip.size() != kNumFeatures) throw DataError("artifact: bad feature_clip");
    for (int i = 0; i < kNumFeatures; ++i) a.clip.ranges[i] = {clip[i][0], clip[i][1]};
    a.market = j.at("market").get<MarketConfig>();
    a.market_fingerprint = std::stoull(j.at("market_fingerprint").get<std::string>(), nullptr, 16);
    a.curriculum = j.at("curriculum").get<CurriculumSchedule>();
    a.seed = j.at("training").at("seed").get<std::uint64_t>();
    a.episodes = j.at("training").at("episodes").get<int>();
    a.updates = j.at("training").at("updates").get<long>();
    a.diverged = j.at("training").at("diverged").get<bool>();
    a.q1 = detail::network_from_json(j.at("q1"));
    a.q2 = detail::network_from_json(j.at("q2"));
    a.q1_target = detail::network_from_json(j.at("q1_target"));
    a.q2_target = detail::network_from_json(j.at("q2_target"));
    if (a.q1.actions() != static_cast<int>(a.grid.size()) ||
        a.q1.input_dim() != kNumFeatures + a.market.num_regimes())
      throw DataError("artifact: network shape does not match grid or regime count");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("artifact: ") + e.what());
  }
}

inline void save_artifact(const PolicyArtifact& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << serialize_artifact(a);
}

inline PolicyArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_artifact(ss.str());
}

}  // namespace cbrl
