// Command-line front end: market generation, oracle solving, training, evaluation and metrics.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbrl/harness.hpp"

namespace fs = std::filesystem;
using namespace cbrl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct DataDay {
  std::string name;  // file stem
  ProblemInstance instance;
};

std::vector<DataDay> load_data_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .jsonl day files in " + dir);
  std::vector<DataDay> days;
  for (const auto& f : files) {
    try {
      days.push_back({f.stem().string(), read_dataset(f.string())});
    } catch (const DataError& e) {
      throw DataError(f.filename().string() + ": " + e.what());
    }
  }
  return days;
}

/// D* per day name, from an oracle file when given, otherwise solved here.
std::map<std::string, double> oracle_values(const std::vector<DataDay>& days, const std::string& oracle_file,
                                            const RatioGrid& grid, int buckets) {
  std::map<std::string, double> out;
  if (!oracle_file.empty()) {
    std::ifstream in(oracle_file);
    if (!in) throw DataError("cannot open: " + oracle_file);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("day") || !j.contains("D_star"))
        throw DataError(oracle_file + " line " + std::to_string(n) + ": bad oracle record");
      out[j.at("day").get<std::string>()] = j.at("D_star").get<double>();
    }
    for (const auto& d : days)
      if (!out.count(d.name)) throw DataError("oracle file has no record for day " + d.name);
    return out;
  }
  for (const auto& d : days)
    out[d.name] = solve_slotwise_oracle(d.instance, grid, {std::nullopt, buckets}).delivery;
  return out;
}

std::vector<DayResult> run_policy(SlotPolicy& policy, const std::vector<DataDay>& days,
                                  const std::map<std::string, double>& dstar, const std::string& agent,
                                  std::uint64_t seed) {
  std::vector<DayResult> rows;
  for (std::size_t i = 0; i < days.size(); ++i) {
    const auto& d = days[i];
    const double v = dstar.at(d.name);
    Rng rng = make_rng(seed, i);
    const DayOutcome o = run_day(policy, d.instance, v > 0.0 ? v : 1.0, rng);
    Day day;
    day.instance = d.instance;
    day.oracle.delivery = v;
    rows.push_back(make_day_result(day, o, d.name, std::isinf(d.instance.budget) ? Setting::kSingle : Setting::kMulti,
                                   agent));
  }
  return rows;
}

void write_rows(const std::string& path, const std::vector<DayResult>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  write_day_csv(out, rows);
}

std::string day_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "day_%05d", i);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ROI-constrained bidding: simulation, oracle, training and evaluation"};
  app.require_subcommand(1);

  std::string config, out, data, artifact_path, oracle_file, kind = "fixed", belief = "posterior", input;
  int days = 100;
  std::uint64_t seed = 7;
  double grid_step = 0.1, ratio = -1.0;
  int buckets = 10000;

  auto* gen = app.add_subcommand("gen-market", "generate day files and market.json");
  gen->add_option("--config", config, "experiment config (JSON)")->required();
  gen->add_option("--days", days, "number of days")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "market seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* orc = app.add_subcommand("oracle", "solve the slot-wise oracle for every day");
  orc->add_option("--data", data, "day directory")->required();
  orc->add_option("--grid-step", grid_step, "ratio grid step");
  orc->add_option("--buckets", buckets, "DP weight buckets")->check(CLI::PositiveNumber);
  orc->add_option("--out", out, "output file (JSON lines)")->required();

  auto* trn = app.add_subcommand("train", "train the Bayesian agent");
  trn->add_option("--config", config, "experiment config (JSON)")->required();
  trn->add_option("--out", out, "artifact path")->required();

  auto* evl = app.add_subcommand("eval", "evaluate a trained artifact on a day directory");
  evl->add_option("--artifact", artifact_path, "artifact path")->required();
  evl->add_option("--data", data, "day directory")->required();
  evl->add_option("--oracle", oracle_file, "oracle records (solved on the fly if absent)");
  evl->add_option("--seed", seed, "evaluation seed");
  evl->add_option("--belief", belief, "posterior | uniform")->check(CLI::IsMember({"posterior", "uniform"}));
  evl->add_option("--out", out, "per-day CSV")->required();

  auto* bsl = app.add_subcommand("baseline", "run a baseline bidder on a day directory");
  bsl->add_option("--kind", kind, "pid | cem | fixed")->check(CLI::IsMember({"pid", "cem", "fixed"}));
  bsl->add_option("--data", data, "day directory")->required();
  bsl->add_option("--oracle", oracle_file, "oracle records (solved on the fly if absent)");
  bsl->add_option("--ratio", ratio, "fixed ratio (default: best in hindsight on the data)");
  bsl->add_option("--grid-step", grid_step, "ratio grid step");
  bsl->add_option("--seed", seed, "evaluation seed");
  bsl->add_option("--out", out, "per-day CSV")->required();

  auto* met = app.add_subcommand("metrics", "summarize a per-day CSV");
  met->add_option("--in", input, "per-day CSV")->required();

  auto* run = app.add_subcommand("run", "full experiment: train, evaluate agent and baselines, write CSVs");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      ExperimentConfig cfg = load_experiment_config(config);
      cfg.market.seed = seed;
      const RatioGrid grid = cfg.grid();
      fs::create_directories(out);
      for (int i = 0; i < days; ++i) {
        const auto id = static_cast<std::uint64_t>(i);
        const ProblemInstance inst = constrain_instance(generate_day(cfg.market, {}, id), id, cfg.setting,
                                                        cfg.market.seed, grid, {std::nullopt, cfg.oracle_buckets});
        write_dataset(inst, (fs::path(out) / (day_name(i) + ".jsonl")).string());
      }
      std::ofstream m(fs::path(out) / "market.json");
      m << nlohmann::json{{"market", cfg.market}, {"setting", cfg.setting}}.dump(2) << '\n';
      std::cerr << "wrote " << days << " days to " << out << '\n';
    } else if (*orc) {
      const RatioGrid grid(grid_step);
      const auto ds = load_data_dir(data);
      std::ofstream o(out, std::ios::binary);
      if (!o) throw DataError("cannot write: " + out);
      for (const auto& d : ds) {
        const OraclePlan p = solve_slotwise_oracle(d.instance, grid, {std::nullopt, buckets});
        nlohmann::ordered_json j;
        j["day"] = d.name;
        j["D_star"] = p.delivery;
        j["C_star"] = p.cost;
        j["betas"] = p.ratios;
        o << j.dump() << '\n';
      }
    } else if (*trn) {
      const ExperimentConfig cfg = load_experiment_config(config);
      TrainConfig tc;
      tc.market = cfg.market;
      tc.setting = cfg.setting;
      tc.curriculum = cfg.curriculum;
      tc.agent = cfg.agent;
      tc.grid = cfg.grid();
      tc.oracle = {std::nullopt, cfg.train_oracle_buckets};
      tc.seed = cfg.seed;
      tc.max_episodes = cfg.train_episodes;
      int feasible = 0;
      const auto res = train(tc, [&](const EpisodeLog& l) {
        feasible += l.feasible;
        if ((l.episode + 1) % 100 == 0) {
          std::cerr << "episode " << l.episode + 1 << " stage " << l.stage << " feasible(last 100) " << feasible
                    << '\n';
          feasible = 0;
        }
      });
      save_artifact(res.artifact, out);
      std::cerr << "episodes " << res.artifact.episodes << " updates " << res.artifact.updates
                << (res.artifact.diverged ? " DIVERGED" : "") << '\n';
      if (res.artifact.diverged) return 1;
    } else if (*evl) {
      const PolicyArtifact a = load_artifact(artifact_path);
      const auto ds = load_data_dir(data);
      const auto dstar = oracle_values(ds, oracle_file, a.grid, buckets);
      BayesianPolicy policy(a, belief == "posterior" ? BeliefMode::kPosterior : BeliefMode::kFrozenUniform);
      write_rows(out, run_policy(policy, ds, dstar, belief == "posterior" ? "cbrl" : "cbrl-uniform", seed));
    } else if (*bsl) {
      const RatioGrid grid(grid_step);
      const auto ds = load_data_dir(data);
      const auto dstar = oracle_values(ds, oracle_file, grid, buckets);
      std::vector<DayResult> rows;
      if (kind == "pid") {
        PidPolicy p;
        rows = run_policy(p, ds, dstar, "pid", seed);
      } else if (kind == "cem") {
        CemPolicy p;
        rows = run_policy(p, ds, dstar, "cem", seed);
      } else {
        if (ratio < 0.0) {
          std::vector<ProblemInstance> inst;
          std::vector<double> v;
          for (const auto& d : ds) {
            inst.push_back(d.instance);
            v.push_back(dstar.at(d.name));
          }
          ratio = solve_fixed_ratio(inst, v, grid);
          std::cerr << "fixed ratio " << format_double(ratio) << '\n';
        }
        if (ratio > kMaxRatio) throw ConfigError("ratio must be in [0, 4]");
        FixedRatioPolicy p(ratio);
        rows = run_policy(p, ds, dstar, "fixed", seed);
      }
      write_rows(out, rows);
    } else if (*met) {
      std::ifstream in(input);
      if (!in) throw DataError("cannot open: " + input);
      const auto rows = read_day_csv(in);
      if (rows.empty()) throw DataError("no rows in " + input);
      const auto summary = summarize_results(rows);
      write_summary_csv(std::cout, summary);
    } else if (*run) {
      ExperimentConfig cfg = load_experiment_config(config);
      if (!out.empty()) cfg.output_dir = out;
      if (cfg.output_dir.empty()) throw ConfigError("no output directory (set output_dir or --out)");
      const auto res = run_experiment(cfg);
      for (const auto& r : res.summary)
        if (r.metric != "ANDR")
          std::cout << r.agent << ' ' << r.split << ' ' << r.metric << ' ' << format_double(r.pooled) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
