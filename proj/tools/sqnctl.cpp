// Experiment driver: pilot threshold estimation, gated online training,
// non-learning baselines, and run-directory summaries.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqn/builtin.hpp"
#include "sqn/experiment.hpp"

namespace {

struct CommonArgs {
  std::string env;
  std::string algo;
  int seeds = 5;
  long long steps = 200000;
  int te = 0;  // 0: pick by environment kind
  int epochs = 5;
  int minibatches = 8;
  double clip = 0.2;
  double lambda = 0.95;
  double omega = -0.1;
  double gamma = 0.1;
  double rmin = 0.05;
  double lr = 3e-4;
  int e0 = 50;
  double tol = 0.01;
  std::string out = ".";
  std::string resume;
  bool literal_clip = false;
  bool no_adv_norm = false;
  bool full_scale = false;
};

void add_env_flags(CLI::App* cmd, CommonArgs& a, bool env_required) {
  auto* env = cmd->add_option(
      "--env", a.env, "environment: sh1|sh2|mh1|mh2 or a JSON config path");
  if (env_required) env->required();
  cmd->add_option("--seeds", a.seeds, "number of seeds (values 1..N)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--steps", a.steps, "total environment steps per seed")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--omega", a.omega, "drift threshold target (negative)");
}

void add_train_flags(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--te", a.te,
                  "episode length (default 2048 single-hop, 512 multi-hop)");
  cmd->add_option("--epochs", a.epochs, "update epochs per episode");
  cmd->add_option("--minibatches", a.minibatches, "minibatches per epoch");
  cmd->add_option("--clip", a.clip, "surrogate clip width in (0,1)");
  cmd->add_option("--lambda", a.lambda, "advantage mixing factor in [0,1]");
  cmd->add_option("--gamma", a.gamma, "threshold growth rate");
  cmd->add_option("--rmin", a.rmin, "intervention-rate deadband");
  cmd->add_option("--lr", a.lr, "optimizer step size");
  cmd->add_option("--e0", a.e0, "pilot episode cap");
  cmd->add_option("--tol", a.tol, "pilot convergence tolerance");
  cmd->add_flag("--literal-clip", a.literal_clip,
                "clip the advantage instead of the ratio");
  cmd->add_flag("--no-adv-norm", a.no_adv_norm,
                "disable advantage normalization");
  cmd->add_flag("--full", a.full_scale,
                "full-scale run (10^6 steps unless --steps is given)");
}

sqn::ExperimentConfig build_config(const CommonArgs& a, CLI::App* cmd,
                                   sqn::Algo algo) {
  sqn::ExperimentConfig cfg;
  cfg.config_json = sqn::resolve_config_text(a.env);
  cfg.net = sqn::load_config_text(cfg.config_json);
  cfg.train.algo = algo;
  cfg.train.te = a.te > 0 ? a.te
                 : cfg.net.kind == sqn::TaskKind::MultiHop ? 512
                                                           : 2048;
  cfg.train.epochs = a.epochs;
  cfg.train.minibatches = a.minibatches;
  cfg.train.clip = a.clip;
  cfg.train.lambda = a.lambda;
  cfg.train.lr = a.lr;
  cfg.train.literal_clip = a.literal_clip;
  cfg.train.normalize_advantages = !a.no_adv_norm;
  cfg.omega = a.omega;
  cfg.gate_gamma = a.gamma;
  cfg.r_min = a.rmin;
  cfg.t_end = a.steps;
  if (a.full_scale && cmd->count("--steps") == 0) cfg.t_end = 1000000;
  cfg.e0 = a.e0;
  cfg.pilot_tol = a.tol;
  cfg.seeds.clear();
  for (int s = 1; s <= a.seeds; ++s) cfg.seeds.push_back(s);
  cfg.out_dir = a.out;
  return cfg;
}

std::string table_value(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

void print_summary(const std::vector<sqn::AlgoSummary>& rows) {
  std::cout << std::left << std::setw(14) << "algo" << std::right
            << std::setw(6) << "seeds" << std::setw(13) << "final_avg"
            << std::setw(12) << "ci95" << std::setw(13) << "final_ma"
            << std::setw(12) << "ci95" << std::setw(13) << "crossing"
            << std::setw(12) << "ci95" << "\n";
  for (const auto& s : rows)
    std::cout << std::left << std::setw(14) << s.algo << std::right
              << std::setw(6) << s.n << std::setw(13) << table_value(s.ft_mean)
              << std::setw(12) << table_value(s.ft_ci) << std::setw(13)
              << table_value(s.fm_mean) << std::setw(12) << table_value(s.fm_ci)
              << std::setw(13) << table_value(s.cross_mean) << std::setw(12)
              << table_value(s.cross_ci) << "\n";
}

int run_pilot_cmd(const CommonArgs& a, CLI::App* cmd) {
  // Any non-random algo maps to the environment's default stabilizing policy.
  sqn::Algo algo = a.algo.empty() ? sqn::Algo::MaxWeight
                                  : sqn::algo_from_name(a.algo);
  sqn::ExperimentConfig cfg = build_config(a, cmd, algo);
  std::filesystem::create_directories(cfg.out_dir);
  for (auto seed : cfg.seeds) {
    const std::string drift =
        cfg.out_dir + "/pilot_seed" + std::to_string(seed) + "_drift.csv";
    const auto report = sqn::pilot_experiment(cfg, seed, drift);
    std::cout << "seed " << seed << ": steps=" << report.steps
              << " converged=" << (report.converged ? "yes" : "no")
              << " point=" << sqn::format_double(report.estimate.point)
              << " weighted=" << sqn::format_double(report.estimate.weighted)
              << (report.estimate.fallback ? " (fallback percentile)" : "")
              << " table=" << drift << "\n";
  }
  return 0;
}

int run_train_cmd(const CommonArgs& a, CLI::App* cmd, bool learning_only) {
  if (!a.resume.empty()) {
    if (cmd->count("--steps") == 0)
      throw CLI::ValidationError("--resume requires --steps (new total)");
    sqn::resume_seed(a.resume, a.steps);
    std::cout << "resumed " << a.resume << " to " << a.steps << " steps\n";
    return 0;
  }
  if (a.env.empty())
    throw CLI::ValidationError("--env is required unless --resume is given");
  sqn::Algo algo = sqn::algo_from_name(
      a.algo.empty() ? (learning_only ? "ia-ppo" : "maxweight") : a.algo);
  if (learning_only && !sqn::is_learning_algo(algo))
    throw CLI::ValidationError(
        "train expects ia-ppo, ia-pg, or ac-ppo; use the baseline subcommand");
  sqn::ExperimentConfig cfg = build_config(a, cmd, algo);
  if (!learning_only && sqn::is_learning_algo(algo))
    throw CLI::ValidationError(
        "baseline expects maxweight, backpressure, or random");
  if (!learning_only && a.algo.empty())
    cfg.train.algo = cfg.net.kind == sqn::TaskKind::MultiHop
                         ? sqn::Algo::Backpressure
                         : sqn::Algo::MaxWeight;
  cfg.validate();
  sqn::run_experiment(cfg);
  for (auto seed : cfg.seeds)
    std::cout << "wrote " << sqn::seed_file_base(cfg, seed) << ".csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic queueing network trainer"};
  app.require_subcommand(1);

  CommonArgs pilot_args, train_args, baseline_args;
  std::string summarize_dir = ".";

  auto* pilot = app.add_subcommand(
      "pilot", "run the stabilizing policy, estimate the backlog threshold");
  add_env_flags(pilot, pilot_args, true);
  pilot->add_option("--algo", pilot_args.algo,
                    "stabilizing policy: maxweight|backpressure|random");
  pilot->add_option("--tol", pilot_args.tol, "convergence tolerance");

  auto* train = app.add_subcommand("train", "full gated training experiment");
  add_env_flags(train, train_args, false);
  train->add_option("--algo", train_args.algo, "ia-ppo|ia-pg|ac-ppo");
  train->add_option("--resume", train_args.resume,
                    "checkpoint to continue (with --steps)");
  add_train_flags(train, train_args);

  auto* baseline =
      app.add_subcommand("baseline", "non-learning scheduler run");
  add_env_flags(baseline, baseline_args, true);
  baseline->add_option("--algo", baseline_args.algo,
                       "maxweight|backpressure|random");
  baseline->add_option("--te", baseline_args.te, "episode length for logging");

  auto* summarize =
      app.add_subcommand("summarize", "aggregate a run directory");
  summarize->add_option("--out", summarize_dir, "run directory to summarize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pilot->parsed()) return run_pilot_cmd(pilot_args, pilot);
    if (train->parsed()) return run_train_cmd(train_args, train, true);
    if (baseline->parsed()) return run_train_cmd(baseline_args, baseline, false);
    if (summarize->parsed()) {
      const auto rows = sqn::summarize_dir(summarize_dir);
      sqn::write_summary_csv(rows, summarize_dir + "/summary.csv");
      print_summary(rows);
      std::cout << "wrote " << summarize_dir << "/summary.csv\n";
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
