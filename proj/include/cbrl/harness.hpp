#pragma once

// Experiment runner: builds train/test/shifted day sets, trains the agent, evaluates it and the
// baselines over several evaluation seeds, and emits per-day and summary CSVs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrl/agents/bayes_agent.hpp"
#include "cbrl/agents/cem.hpp"
#include "cbrl/agents/pid.hpp"
#include "cbrl/agents/policy.hpp"
#include "cbrl/metrics.hpp"
#include "cbrl/scenario.hpp"

namespace cbrl {

struct ExperimentConfig {
  MarketConfig market = default_market();
  ConstraintSetting setting;
  CurriculumSchedule curriculum = default_curriculum();
  AgentHyperparams agent;
  double grid_step = 0.1;
  int oracle_buckets = 10000;        // evaluation days
  int train_oracle_buckets = 2000;   // training days (oracle only normalizes rewards and features)
  std::optional<int> train_episodes;  // unset: full curriculum schedule
  int test_days = 100;
  int shifted_days = 100;
  double shifted_log_offset = 0.25;  // added to every regime's price_ratio_log_mean
  int fixed_ratio_fit_days = 200;    // training days the fixed-ratio baseline is tuned on
  int eval_seeds = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> baselines{"pid", "cem", "fixed"};
  bool include_ablation = true;  // also evaluate the frozen-uniform-belief agent
  PidGains pid;
  CemParams cem;
  std::string output_dir;  // empty: nothing written

  RatioGrid grid() const { return RatioGrid(grid_step); }
};

inline MarketConfig shifted_market(const MarketConfig& m, double log_offset) {
  MarketConfig s = m;
  for (auto& r : s.regimes) r.price_ratio_log_mean += log_offset;
  return s;
}

inline void validate(const ExperimentConfig& c) {
  validate(c.market);
  validate(c.curriculum);
  (void)c.grid();
  if (c.oracle_buckets < 1 || c.train_oracle_buckets < 1) throw ConfigError("oracle buckets must be >= 1");
  if (c.test_days < 1) throw ConfigError("test_days must be >= 1");
  if (c.shifted_days < 0) throw ConfigError("shifted_days must be >= 0");
  if (c.fixed_ratio_fit_days < 1) throw ConfigError("fixed_ratio_fit_days must be >= 1");
  if (c.eval_seeds < 1) throw ConfigError("eval_seeds must be >= 1");
  if (c.train_episodes && *c.train_episodes < 0) throw ConfigError("train_episodes must be >= 0");
  for (const auto& b : c.baselines)
    if (b != "pid" && b != "cem" && b != "fixed") throw ConfigError("unknown baseline '" + b + "'");
  if (c.shifted_days > 0) {
    const MarketConfig s = shifted_market(c.market, c.shifted_log_offset);
    for (const auto& a : c.market.regimes)
      for (const auto& b : s.regimes)
        if (std::abs(a.price_ratio_log_mean - b.price_ratio_log_mean) < c.market.min_regime_separation)
          throw ConfigError("shifted regimes must be disjoint from the training regimes in price_ratio_log_mean");
  }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"market", c.market},
                     {"setting", c.setting},
                     {"curriculum", c.curriculum},
                     {"agent", c.agent},
                     {"grid_step", c.grid_step},
                     {"oracle_buckets", c.oracle_buckets},
                     {"train_oracle_buckets", c.train_oracle_buckets},
                     {"test_days", c.test_days},
                     {"shifted_days", c.shifted_days},
                     {"shifted_log_offset", c.shifted_log_offset},
                     {"fixed_ratio_fit_days", c.fixed_ratio_fit_days},
                     {"eval_seeds", c.eval_seeds},
                     {"seed", c.seed},
                     {"baselines", c.baselines},
                     {"include_ablation", c.include_ablation},
                     {"pid", {{"kp", c.pid.kp}, {"ki", c.pid.ki}, {"kd", c.pid.kd}, {"integral_limit", c.pid.integral_limit}}},
                     {"cem",
                      {{"population", c.cem.population},
                       {"elite_fraction", c.cem.elite_fraction},
                       {"init_mean", c.cem.init_mean},
                       {"init_std", c.cem.init_std},
                       {"min_std", c.cem.min_std}}},
                     {"output_dir", c.output_dir}};
  if (c.train_episodes) j["train_episodes"] = *c.train_episodes;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{"market",        "setting",          "curriculum",           "agent",
                                           "grid_step",     "oracle_buckets",   "train_oracle_buckets", "train_episodes",
                                           "test_days",     "shifted_days",     "shifted_log_offset",   "fixed_ratio_fit_days",
                                           "eval_seeds",    "seed",             "baselines",            "include_ablation",
                                           "pid",           "cem",              "output_dir"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  const ExperimentConfig d;
  c.market = j.contains("market") ? j.at("market").get<MarketConfig>() : d.market;
  c.setting = j.contains("setting") ? j.at("setting").get<ConstraintSetting>() : d.setting;
  c.curriculum = j.contains("curriculum") ? j.at("curriculum").get<CurriculumSchedule>() : d.curriculum;
  c.agent = j.contains("agent") ? j.at("agent").get<AgentHyperparams>() : d.agent;
  c.grid_step = j.value("grid_step", d.grid_step);
  c.oracle_buckets = j.value("oracle_buckets", d.oracle_buckets);
  c.train_oracle_buckets = j.value("train_oracle_buckets", d.train_oracle_buckets);
  c.train_episodes = j.contains("train_episodes") ? std::optional<int>(j.at("train_episodes").get<int>()) : std::nullopt;
  c.test_days = j.value("test_days", d.test_days);
  c.shifted_days = j.value("shifted_days", d.shifted_days);
  c.shifted_log_offset = j.value("shifted_log_offset", d.shifted_log_offset);
  c.fixed_ratio_fit_days = j.value("fixed_ratio_fit_days", d.fixed_ratio_fit_days);
  c.eval_seeds = j.value("eval_seeds", d.eval_seeds);
  c.seed = j.value("seed", d.seed);
  c.baselines = j.value("baselines", d.baselines);
  c.include_ablation = j.value("include_ablation", d.include_ablation);
  c.pid = d.pid;
  if (j.contains("pid")) {
    const auto& p = j.at("pid");
    c.pid.kp = p.value("kp", d.pid.kp);
    c.pid.ki = p.value("ki", d.pid.ki);
    c.pid.kd = p.value("kd", d.pid.kd);
    c.pid.integral_limit = p.value("integral_limit", d.pid.integral_limit);
  }
  c.cem = d.cem;
  if (j.contains("cem")) {
    const auto& p = j.at("cem");
    c.cem.population = p.value("population", d.cem.population);
    c.cem.elite_fraction = p.value("elite_fraction", d.cem.elite_fraction);
    c.cem.init_mean = p.value("init_mean", d.cem.init_mean);
    c.cem.init_std = p.value("init_std", d.cem.init_std);
    c.cem.min_std = p.value("min_std", d.cem.min_std);
  }
  c.output_dir = j.value("output_dir", d.output_dir);
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  try {
    ExperimentConfig c = j.get<ExperimentConfig>();
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

/// Default single-constraint benchmark at desk scale: 100 episodes per epoch, so the 3 + 3 + 9
/// epoch schedule trains for 1500 episodes.
inline ExperimentConfig benchmark_config() {
  ExperimentConfig c;
  c.agent.episodes_per_epoch = 100;
  c.curriculum.final_stage_epochs = 9;
  return c;
}

/// Tiny end-to-end configuration: two-slot days, a three-point grid, a handful of episodes.
inline ExperimentConfig smoke_config() {
  ExperimentConfig c;
  c.market.slots_per_day = 2;
  for (auto& r : c.market.regimes) r.arrival_rate = 5.0;
  c.grid_step = 2.0;
  c.oracle_buckets = 200;
  c.train_oracle_buckets = 200;
  c.agent.batch_size = 4;
  c.agent.episodes_per_epoch = 1;
  c.agent.hidden = 8;
  c.curriculum.final_stage_epochs = 1;
  c.train_episodes = 2;
  c.test_days = 2;
  c.shifted_days = 2;
  c.fixed_ratio_fit_days = 2;
  c.eval_seeds = 2;
  return c;
}

// ---------------------------------------------------------------------------
// Per-day CSV

inline constexpr const char* kDayCsvHeader = "day_id,setting,L,B,D,C,ROI,D_star,feasible,agent";

inline void write_day_csv(std::ostream& out, std::span<const DayResult> rows) {
  out << kDayCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.day_id << ',' << to_string(r.setting) << ',' << format_double(r.roi_limit) << ','
        << format_double(r.budget) << ',' << format_double(r.delivery) << ',' << format_double(r.cost) << ','
        << format_double(r.roi) << ',' << format_double(r.oracle_value) << ',' << (r.feasible ? 1 : 0) << ','
        << r.agent << '\n';
  }
}

namespace detail {

inline double parse_csv_double(const std::string& s, int line) {
  if (s == "inf") return kInf;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline std::vector<DayResult> read_day_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDayCsvHeader) throw DataError("line 1: unexpected CSV header");
  std::vector<DayResult> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 10) throw DataError("line " + std::to_string(n) + ": expected 10 fields");
    DayResult r;
    r.day_id = c[0];
    try {
      r.setting = parse_setting(c[1]);
    } catch (const ConfigError& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    }
    r.roi_limit = detail::parse_csv_double(c[2], n);
    r.budget = detail::parse_csv_double(c[3], n);
    r.delivery = detail::parse_csv_double(c[4], n);
    r.cost = detail::parse_csv_double(c[5], n);
    r.roi = detail::parse_csv_double(c[6], n);
    r.oracle_value = detail::parse_csv_double(c[7], n);
    if (c[8] != "0" && c[8] != "1") throw DataError("line " + std::to_string(n) + ": feasible must be 0 or 1");
    r.feasible = c[8] == "1";
    r.agent = c[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Summary

/// Day ids are "<split>/<day index>/<eval seed>"; plain ids count as split "all", seed 0.
struct DayKey {
  std::string split = "all";
  std::string day = "";
  std::string seed = "0";
};

inline DayKey parse_day_key(const std::string& id) {
  DayKey k;
  const auto a = id.find('/');
  if (a == std::string::npos) {
    k.day = id;
    return k;
  }
  const auto b = id.find('/', a + 1);
  k.split = id.substr(0, a);
  k.day = id.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1);
  if (b != std::string::npos) k.seed = id.substr(b + 1);
  return k;
}

struct SummaryRow {
  std::string agent;
  std::string split;
  std::string metric;  // ANS, CSR or ANDR
  double pooled = 0.0;
  Summary over_seeds;
};

inline constexpr const char* kSummaryCsvHeader = "agent,split,metric,pooled,mean,median,q25,q75";

/// Metrics per (agent, split): pooled over every row, and mean/median/quartiles of the per-seed values.
inline std::vector<SummaryRow> summarize_results(std::span<const DayResult> rows) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<DayResult>>> groups;
  for (const auto& r : rows) {
    const DayKey k = parse_day_key(r.day_id);
    groups[{r.agent, k.split}][k.seed].push_back(r);
  }
  auto safe_andr = [](std::span<const DayResult> rs) {
    for (const auto& r : rs)
      if (r.feasible) return andr(rs);
    return std::nan("");
  };
  std::vector<SummaryRow> out;
  for (const auto& [key, by_seed] : groups) {
    std::vector<DayResult> all;
    std::vector<double> a, c, d;
    for (const auto& [seed, rs] : by_seed) {
      all.insert(all.end(), rs.begin(), rs.end());
      a.push_back(ans(rs));
      c.push_back(csr(rs));
      const double v = safe_andr(rs);
      if (!std::isnan(v)) d.push_back(v);
    }
    out.push_back({key.first, key.second, "ANS", ans(all), summarize(a)});
    out.push_back({key.first, key.second, "CSR", csr(all), summarize(c)});
    out.push_back({key.first, key.second, "ANDR", safe_andr(all), summarize(d)});
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.agent << ',' << r.split << ',' << r.metric << ',' << format_double(r.pooled) << ','
        << format_double(r.over_seeds.mean) << ',' << format_double(r.over_seeds.median) << ','
        << format_double(r.over_seeds.q25) << ',' << format_double(r.over_seeds.q75) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Runner

inline DayResult make_day_result(const Day& day, const DayOutcome& o, const std::string& day_id, Setting setting,
                                 const std::string& agent) {
  DayResult r;
  r.day_id = day_id;
  r.setting = setting;
  r.roi_limit = day.instance.roi_limit;
  r.budget = day.instance.budget;
  r.delivery = o.delivery;
  r.cost = o.cost;
  r.roi = o.roi;
  r.oracle_value = day.oracle_value();
  r.feasible = o.feasible;
  r.agent = agent;
  return r;
}

namespace detail {

/// Re-throws with `context` prefixed, keeping the error category.
template <class F>
auto with_context(const std::string& context, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  }
}

}  // namespace detail

inline constexpr std::uint64_t kTestDayBase = 1000000;
inline constexpr std::uint64_t kShiftedDayBase = 2000000;

inline std::vector<Day> make_days(const MarketConfig& market, const ConstraintSetting& setting, std::uint64_t first_id,
                                  int n, const RatioGrid& grid, const OracleOptions& oracle) {
  std::vector<Day> days;
  days.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t id = first_id + static_cast<std::uint64_t>(i);
    days.push_back(detail::with_context("day " + std::to_string(id),
                                        [&] { return make_day(market, setting, id, grid, oracle); }));
  }
  return days;
}

struct ExperimentResult {
  std::vector<DayResult> days;
  std::vector<SummaryRow> summary;
  PolicyArtifact artifact;
  double fixed_ratio = 0.0;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const EpisodeLog&)>& on_episode = {}) {
  validate(cfg);
  const RatioGrid grid = cfg.grid();
  const OracleOptions eval_oracle{std::nullopt, cfg.oracle_buckets};
  const OracleOptions train_oracle{std::nullopt, cfg.train_oracle_buckets};
  ExperimentResult result;

  // Training.
  TrainConfig tc;
  tc.market = cfg.market;
  tc.setting = cfg.setting;
  tc.curriculum = cfg.curriculum;
  tc.agent = cfg.agent;
  tc.grid = grid;
  tc.oracle = train_oracle;
  tc.seed = cfg.seed;
  tc.max_episodes = cfg.train_episodes;
  result.artifact = detail::with_context("training", [&] { return train(tc, on_episode).artifact; });

  // Fixed-ratio baseline tuned in hindsight on training days.
  if (std::find(cfg.baselines.begin(), cfg.baselines.end(), "fixed") != cfg.baselines.end()) {
    const auto fit = make_days(cfg.market, cfg.setting, 0, cfg.fixed_ratio_fit_days, grid, eval_oracle);
    std::vector<ProblemInstance> inst;
    std::vector<double> values;
    for (const auto& d : fit) {
      inst.push_back(d.instance);
      values.push_back(d.oracle_value());
    }
    result.fixed_ratio = solve_fixed_ratio(inst, values, grid);
  }

  struct Split {
    std::string name;
    std::vector<Day> days;
  };
  std::vector<Split> splits;
  splits.push_back({"test", make_days(cfg.market, cfg.setting, kTestDayBase, cfg.test_days, grid, eval_oracle)});
  if (cfg.shifted_days > 0)
    splits.push_back({"shifted", make_days(shifted_market(cfg.market, cfg.shifted_log_offset), cfg.setting,
                                           kShiftedDayBase, cfg.shifted_days, grid, eval_oracle)});

  for (const auto& split : splits) {
    for (int s = 0; s < cfg.eval_seeds; ++s) {
      const std::uint64_t eval_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(s);
      auto emit = [&](SlotPolicy& policy, const std::string& agent, std::uint64_t stream) {
        for (std::size_t i = 0; i < split.days.size(); ++i) {
          const Day& d = split.days[i];
          Rng rng = make_rng(eval_seed ^ stream, d.id);
          const DayOutcome o = run_day(policy, d.instance, d.normalizer(), rng);
          result.days.push_back(make_day_result(
              d, o, split.name + "/" + std::to_string(i) + "/" + std::to_string(s), cfg.setting.kind, agent));
        }
      };
      BayesianPolicy agent(result.artifact, BeliefMode::kPosterior);
      emit(agent, "cbrl", 0);
      if (cfg.include_ablation) {
        BayesianPolicy frozen(result.artifact, BeliefMode::kFrozenUniform);
        emit(frozen, "cbrl-uniform", 0);
      }
      for (const auto& b : cfg.baselines) {
        if (b == "pid") {
          PidPolicy p(cfg.pid);
          emit(p, "pid", 0x9d1);
        } else if (b == "cem") {
          CemPolicy p(cfg.cem);
          emit(p, "cem", 0xce3);
        } else {
          FixedRatioPolicy p(result.fixed_ratio);
          emit(p, "fixed", 0xf1d);
        }
      }
    }
  }
  result.summary = summarize_results(result.days);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    std::ofstream per_day(dir / "per_day.csv", std::ios::binary);
    std::ofstream summary(dir / "summary.csv", std::ios::binary);
    if (!per_day || !summary) throw DataError("cannot write results under " + cfg.output_dir);
    write_day_csv(per_day, result.days);
    write_summary_csv(summary, result.summary);
    save_artifact(result.artifact, (dir / "policy.json").string());
  }
  return result;
}

}  // namespace cbrl
