#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sqn/baselines.hpp"
#include "sqn/checkpoint.hpp"
#include "sqn/config.hpp"
#include "sqn/drift.hpp"
#include "sqn/env.hpp"
#include "sqn/metrics.hpp"
#include "sqn/train.hpp"

namespace sqn {

struct ExperimentConfig {
  std::string config_json;  // resolved environment description
  NetworkConfig net;
  TrainConfig train;
  double omega = -0.1;
  double gate_gamma = 0.1;
  double r_min = 0.05;
  long long t_end = 200000;
  int e0 = 50;  // pilot episode cap
  double pilot_tol = 0.01;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = ".";

  bool uses_pilot() const {
    return train.algo == Algo::IaPpo || train.algo == Algo::IaPg;
  }

  void validate() const {
    train.validate();
    if (t_end < 1) throw std::invalid_argument("steps must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("at least one seed required");
    auto sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("seeds must be distinct");
    if (uses_pilot()) {
      if (e0 < 1) throw std::invalid_argument("pilot episode cap must be >= 1");
      if (t_end < static_cast<long long>(e0) * train.te)
        throw std::invalid_argument(
            "steps must cover the pilot phase (steps >= e0 * te); lower --e0 "
            "or --te");
    }
    if (train.algo == Algo::MaxWeight && net.kind != TaskKind::SingleHop)
      throw std::invalid_argument("maxweight requires a single-hop environment");
    if (train.algo == Algo::Backpressure && net.kind != TaskKind::MultiHop)
      throw std::invalid_argument("backpressure requires a multi-hop environment");
  }
};

inline std::string seed_file_base(const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  return cfg.out_dir + "/" + algo_name(cfg.train.algo) + "_seed" +
         std::to_string(seed);
}

namespace detail {

// everything one seed's run mutates between episodes
struct SeedState {
  Network env;
  BaselinePolicy pi0;
  RandomStream policy_rng;
  ActorCritic ac;
  InterventionGate gate;
  std::vector<std::uint8_t> reach;
  int phase = 0;  // 0 = pilot, 1 = online training / plain baseline
  long long t = 0;
  long long episode = 0;
  long long pilot_episodes = 0;
  double last_int_rate = 0.0;
  double last_eta = 0.0;
  ConvergenceTracker tracker;
  std::map<long long, BucketStat> buckets;
};

inline SeedState make_seed_state(const ExperimentConfig& cfg,
                                 std::uint64_t seed) {
  SeedState st{Network(cfg.net, seed),
               cfg.train.algo == Algo::Randomized
                   ? BaselinePolicy{BaselineKind::Randomized}
                   : default_baseline(cfg.net),
               RandomStream(seed, StreamId::Policy),
               ActorCritic{},
               InterventionGate{},
               reach_for(cfg.net),
               /*phase=*/1};
  st.tracker = ConvergenceTracker(cfg.pilot_tol);
  st.gate.omega = cfg.omega;
  st.gate.gamma = cfg.gate_gamma;
  st.gate.r_min = cfg.r_min;
  if (is_learning_algo(cfg.train.algo)) {
    st.ac = make_actor_critic(cfg.net, seed, cfg.train.lr);
    if (cfg.train.algo == Algo::AcPpo)
      st.gate.enabled = false;  // ablation: no interventions at all
    else
      st.phase = 0;  // pilot first; sentinel threshold routes to the baseline
  }
  return st;
}

inline void save_checkpoint(const ExperimentConfig& cfg, std::uint64_t seed,
                            const SeedState& st, const MetricsWriter& writer,
                            const std::string& path, bool aborted) {
  Checkpoint ck;
  ck.put_int("meta/format", 1);
  ck.put_bytes("meta/config_json", cfg.config_json);
  ck.put_bytes("meta/algo", algo_name(cfg.train.algo));
  ck.put_int("meta/seed", static_cast<std::int64_t>(seed));
  ck.put_int("meta/t", st.t);
  ck.put_int("meta/t_end", cfg.t_end);
  ck.put_int("meta/episode", st.episode);
  ck.put_int("meta/phase", st.phase);
  ck.put_int("meta/pilot_episodes", st.pilot_episodes);
  ck.put_int("meta/e0", cfg.e0);
  ck.put_int("meta/aborted", aborted ? 1 : 0);

  ck.put_int("train/te", cfg.train.te);
  ck.put_int("train/epochs", cfg.train.epochs);
  ck.put_int("train/minibatches", cfg.train.minibatches);
  ck.put_double("train/clip", cfg.train.clip);
  ck.put_double("train/lambda", cfg.train.lambda);
  ck.put_double("train/lr", cfg.train.lr);
  ck.put_int("train/literal_clip", cfg.train.literal_clip ? 1 : 0);
  ck.put_int("train/adv_norm", cfg.train.normalize_advantages ? 1 : 0);
  ck.put_doubles("run/lagged", {st.last_int_rate, st.last_eta});

  ck.put_doubles("gate/params",
                 {st.gate.q_star, st.gate.omega, st.gate.gamma, st.gate.r_min});
  ck.put_int("gate/enabled", st.gate.enabled ? 1 : 0);

  ck.put_double("pilot/tol", cfg.pilot_tol);
  ck.put_ints("pilot/conv_i", {st.tracker.steps(), st.tracker.have_prev() ? 1 : 0,
                               st.tracker.converged() ? 1 : 0});
  ck.put_doubles("pilot/conv_d", {st.tracker.sum(), st.tracker.prev_avg()});
  std::vector<std::int64_t> bq, bn;
  std::vector<double> bs;
  for (const auto& [q, stat] : st.buckets) {
    bq.push_back(q);
    bn.push_back(stat.count);
    bs.push_back(stat.sum);
  }
  ck.put_ints("pilot/bucket_q", std::move(bq));
  ck.put_ints("pilot/bucket_n", std::move(bn));
  ck.put_doubles("pilot/bucket_sum", std::move(bs));

  const NetworkState& s = st.env.state();
  ck.put_ints("env/q", {s.q.begin(), s.q.end()});
  ck.put_ints("env/y", {s.y.begin(), s.y.end()});
  ck.put_int("env/t", s.t);
  ck.put_bytes("rng/arrivals", st.env.save_arrival_rng());
  ck.put_bytes("rng/links", st.env.save_link_rng());
  ck.put_bytes("rng/policy", st.policy_rng.save());

  if (!st.ac.actor.layers.empty()) {
    ck.put_doubles("actor/params", st.ac.actor.flatten());
    ck.put_doubles("actor/adam_m", flatten_layers(st.ac.actor_opt.m));
    ck.put_doubles("actor/adam_v", flatten_layers(st.ac.actor_opt.v));
    ck.put_int("actor/adam_step", st.ac.actor_opt.step);
    ck.put_doubles("critic/params", st.ac.critic.flatten());
    ck.put_doubles("critic/adam_m", flatten_layers(st.ac.critic_opt.m));
    ck.put_doubles("critic/adam_v", flatten_layers(st.ac.critic_opt.v));
    ck.put_int("critic/adam_step", st.ac.critic_opt.step);
    ck.put_doubles("critic/bias", {st.ac.bias_b, st.ac.nu, st.ac.bias_ema});
  }

  ck.put_int("metrics/rows", writer.rows());
  ck.put_int("metrics/cum", writer.cum_backlog());
  const auto ring = writer.ring_chronological();
  ck.put_ints("metrics/ring", {ring.begin(), ring.end()});
  ck.save(path);
}

// One episode per iteration: log rows with the previous episode's lagged
// stats, then do the per-phase bookkeeping. Stops at cfg.t_end.
inline void run_loop(const ExperimentConfig& cfg, SeedState& st,
                     MetricsWriter& writer) {
  const bool learning = is_learning_algo(cfg.train.algo);
  while (st.t < cfg.t_end) {
    const int ep_len =
        static_cast<int>(std::min<long long>(cfg.train.te, cfg.t_end - st.t));
    Trajectory traj =
        rollout(st.env, st.ac.actor, st.pi0, st.gate, ep_len, st.policy_rng);
    for (int i = 0; i < ep_len; ++i)
      writer.write_row(traj.backlog[i], traj.intervened[i], st.episode,
                       st.last_int_rate, st.last_eta, st.gate.q_star);

    if (learning && st.phase == 0) {
      for (int i = 0; i < ep_len; ++i) {
        st.tracker.feed(traj.backlog[i]);
        auto& b = st.buckets[traj.backlog[i]];
        b.count += 1;
        b.sum += traj.phi[i + 1] - traj.phi[i];
      }
      ++st.pilot_episodes;
      st.last_int_rate = traj.intervention_rate();
      st.last_eta = estimate_eta(traj);
      if (st.tracker.converged() || st.pilot_episodes >= cfg.e0) {
        st.gate.q_star = estimate_from_buckets(st.buckets, cfg.omega).weighted;
        st.phase = 1;
      }
    } else if (learning) {
      const UpdateStats stats =
          update_phase(traj, st.ac, cfg.train, cfg.net, st.reach, st.policy_rng);
      st.gate.update(traj.intervention_rate());
      st.last_int_rate = traj.intervention_rate();
      st.last_eta = stats.eta;
    } else {
      st.last_int_rate = traj.intervention_rate();
      st.last_eta = estimate_eta(traj);
    }
    ++st.episode;
    st.t += ep_len;
    writer.flush();
  }
}

inline long long count_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  long long n = 0;
  std::string chunk(1 << 16, '\0');
  while (in) {
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    n += std::count(chunk.begin(), chunk.begin() + in.gcount(), '\n');
  }
  return n;
}

}  // namespace detail

inline void run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::string base = seed_file_base(cfg, seed);
  detail::SeedState st = detail::make_seed_state(cfg, seed);
  MetricsWriter writer(base + ".csv");
  try {
    detail::run_loop(cfg, st, writer);
  } catch (...) {
    // salvage whatever state exists, then surface the error
    detail::save_checkpoint(cfg, seed, st, writer, base + ".ckpt", true);
    throw;
  }
  detail::save_checkpoint(cfg, seed, st, writer, base + ".ckpt", false);
}

inline void run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    workers.emplace_back([&cfg, &errors, i] {
      try {
        run_seed(cfg, cfg.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Continue a checkpointed run to a later step count, appending to its metrics
// file. Continuations are bit-identical to an uninterrupted run when the
// checkpoint was cut at an episode boundary (t multiple of te).
inline ExperimentConfig resume_config(const Checkpoint& ck,
                                      const std::string& ckpt_path,
                                      long long new_t_end) {
  ExperimentConfig cfg;
  cfg.config_json = ck.bytes("meta/config_json");
  cfg.net = load_config_text(cfg.config_json);
  cfg.train.algo = algo_from_name(ck.bytes("meta/algo"));
  cfg.train.te = static_cast<int>(ck.integer("train/te"));
  cfg.train.epochs = static_cast<int>(ck.integer("train/epochs"));
  cfg.train.minibatches = static_cast<int>(ck.integer("train/minibatches"));
  cfg.train.clip = ck.scalar("train/clip");
  cfg.train.lambda = ck.scalar("train/lambda");
  cfg.train.lr = ck.scalar("train/lr");
  cfg.train.literal_clip = ck.integer("train/literal_clip") != 0;
  cfg.train.normalize_advantages = ck.integer("train/adv_norm") != 0;
  const auto& gp = ck.doubles("gate/params");
  cfg.omega = gp[1];
  cfg.gate_gamma = gp[2];
  cfg.r_min = gp[3];
  cfg.e0 = static_cast<int>(ck.integer("meta/e0"));
  cfg.pilot_tol = ck.scalar("pilot/tol");
  cfg.t_end = new_t_end;
  cfg.seeds = {static_cast<std::uint64_t>(ck.integer("meta/seed"))};
  cfg.out_dir = std::filesystem::path(ckpt_path).parent_path().string();
  if (cfg.out_dir.empty()) cfg.out_dir = ".";
  return cfg;
}

inline void resume_seed(const std::string& ckpt_path, long long new_t_end) {
  const Checkpoint ck = Checkpoint::load(ckpt_path);
  const ExperimentConfig cfg = resume_config(ck, ckpt_path, new_t_end);
  const auto seed = static_cast<std::uint64_t>(ck.integer("meta/seed"));
  const long long t_done = ck.integer("meta/t");
  if (new_t_end <= t_done)
    throw std::invalid_argument("checkpoint already covers " +
                                std::to_string(t_done) + " steps");

  detail::SeedState st = detail::make_seed_state(cfg, seed);
  st.t = t_done;
  st.episode = ck.integer("meta/episode");
  st.phase = static_cast<int>(ck.integer("meta/phase"));
  st.pilot_episodes = ck.integer("meta/pilot_episodes");
  const auto& lag = ck.doubles("run/lagged");
  st.last_int_rate = lag[0];
  st.last_eta = lag[1];
  const auto& gp = ck.doubles("gate/params");
  st.gate.q_star = gp[0];
  st.gate.enabled = ck.integer("gate/enabled") != 0;

  const auto& ci = ck.ints("pilot/conv_i");
  const auto& cd = ck.doubles("pilot/conv_d");
  st.tracker = ConvergenceTracker(cfg.pilot_tol);
  st.tracker.restore(ci[0], cd[0], cd[1], ci[1] != 0, ci[2] != 0);
  const auto& bq = ck.ints("pilot/bucket_q");
  const auto& bn = ck.ints("pilot/bucket_n");
  const auto& bs = ck.doubles("pilot/bucket_sum");
  for (std::size_t i = 0; i < bq.size(); ++i)
    st.buckets[bq[i]] = detail::BucketStat{bn[i], bs[i]};

  NetworkState s;
  const auto& qi = ck.ints("env/q");
  const auto& yi = ck.ints("env/y");
  s.q.assign(qi.begin(), qi.end());
  s.y.assign(yi.begin(), yi.end());
  s.t = ck.integer("env/t");
  st.env.restore_state(std::move(s));
  st.env.restore_rngs(ck.bytes("rng/arrivals"), ck.bytes("rng/links"));
  st.policy_rng.restore(ck.bytes("rng/policy"));

  if (ck.has("actor/params")) {
    st.ac.actor.unflatten(ck.doubles("actor/params"));
    unflatten_layers(st.ac.actor_opt.m, ck.doubles("actor/adam_m"));
    unflatten_layers(st.ac.actor_opt.v, ck.doubles("actor/adam_v"));
    st.ac.actor_opt.step = ck.integer("actor/adam_step");
    st.ac.critic.unflatten(ck.doubles("critic/params"));
    unflatten_layers(st.ac.critic_opt.m, ck.doubles("critic/adam_m"));
    unflatten_layers(st.ac.critic_opt.v, ck.doubles("critic/adam_v"));
    st.ac.critic_opt.step = ck.integer("critic/adam_step");
    const auto& cb = ck.doubles("critic/bias");
    st.ac.bias_b = cb[0];
    st.ac.nu = cb[1];
    st.ac.bias_ema = cb[2];
  }

  const std::string base = seed_file_base(cfg, seed);
  const long long rows = ck.integer("metrics/rows");
  if (detail::count_lines(base + ".csv") != rows + 1)
    throw std::runtime_error("metrics file does not match checkpoint: " + base +
                             ".csv");
  MetricsWriter writer(base + ".csv", /*append=*/true);
  writer.restore(rows, ck.integer("metrics/cum"),
                 {ck.ints("metrics/ring").begin(), ck.ints("metrics/ring").end()});
  try {
    detail::run_loop(cfg, st, writer);
  } catch (...) {
    detail::save_checkpoint(cfg, seed, st, writer, base + ".ckpt", true);
    throw;
  }
  detail::save_checkpoint(cfg, seed, st, writer, base + ".ckpt", false);
}

// --- pilot-only entry: estimate the threshold and dump the drift table ---

struct PilotReport {
  ThresholdEstimate estimate;
  long long steps = 0;
  bool converged = false;
};

inline PilotReport pilot_experiment(const ExperimentConfig& cfg,
                                    std::uint64_t seed,
                                    const std::string& drift_csv) {
  Network env(cfg.net, seed);
  BaselinePolicy pi0 = cfg.train.algo == Algo::Randomized
                           ? BaselinePolicy{BaselineKind::Randomized}
                           : default_baseline(cfg.net);
  RandomStream prng(seed, StreamId::Policy);
  PilotResult pr = run_pilot(env, pi0, cfg.t_end, cfg.pilot_tol, prng);
  PilotReport report;
  report.steps = pr.t0;
  report.converged = pr.converged;
  report.estimate = estimate_threshold(pr.traj, cfg.omega);
  if (!drift_csv.empty()) {
    std::ofstream out(drift_csv);
    if (!out) throw std::runtime_error("cannot open drift table: " + drift_csv);
    dump_drift_csv(report.estimate, out);
  }
  return report;
}

// --- run-directory summary ---

struct AlgoSummary {
  std::string algo;
  int n = 0;
  double ft_mean = 0, ft_ci = std::numeric_limits<double>::quiet_NaN();
  double fm_mean = std::numeric_limits<double>::quiet_NaN();
  double fm_ci = std::numeric_limits<double>::quiet_NaN();
  double cross_mean = std::numeric_limits<double>::quiet_NaN();
  double cross_ci = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct MetricsScan {
  long long rows = 0;
  double final_time_avg = std::numeric_limits<double>::quiet_NaN();
  double final_moving = std::numeric_limits<double>::quiet_NaN();
  double crossing = std::numeric_limits<double>::infinity();
};

inline double parse_field(const std::string& line, int col) {
  std::size_t start = 0;
  for (int c = 0; c < col; ++c) {
    start = line.find(',', start);
    if (start == std::string::npos)
      throw std::runtime_error("short metrics row: " + line);
    ++start;
  }
  std::size_t end = line.find(',', start);
  if (end == std::string::npos) end = line.size();
  if (end == start) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(line.substr(start, end - start));
}

inline MetricsScan scan_metrics_file(const std::string& path,
                                     double cross_threshold) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("unrecognized metrics header in " + path);
  MetricsScan scan;
  bool crossed = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++scan.rows;
    const double moving = parse_field(line, 3);
    if (!crossed && std::isfinite(cross_threshold) && !std::isnan(moving) &&
        moving < cross_threshold) {
      scan.crossing = parse_field(line, 0);
      crossed = true;
    }
    scan.final_time_avg = parse_field(line, 2);
    scan.final_moving = moving;
  }
  if (scan.rows == 0) throw std::runtime_error("empty metrics file: " + path);
  return scan;
}

struct MeanCi {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double ci = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
};

inline MeanCi mean_ci(const std::vector<double>& xs) {
  MeanCi r;
  r.n = static_cast<int>(xs.size());
  if (xs.empty()) return r;
  double sum = 0;
  for (double x : xs) sum += x;
  r.mean = sum / r.n;
  if (r.n < 2) return r;
  double ss = 0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / (r.n - 1));
  r.ci = t_quantile_975(r.n - 1) * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

}  // namespace detail

// Scans {algo}_seed{N}.csv files; crossing times are measured against the
// mean final time-average of the preferred non-learning baseline present.
inline std::vector<AlgoSummary> summarize_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, std::vector<std::string>> files;  // algo -> paths
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const auto sep = name.find("_seed");
    if (sep == std::string::npos || name.size() < sep + 6) continue;
    if (name.substr(name.size() - 4) != ".csv") continue;
    const std::string algo = name.substr(0, sep);
    const std::string digits = name.substr(sep + 5, name.size() - sep - 9);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos)
      continue;
    try {
      algo_from_name(algo);
    } catch (const std::invalid_argument&) {
      continue;
    }
    files[algo].push_back(entry.path().string());
  }
  if (files.empty())
    throw std::runtime_error("no metrics files found in " + dir);
  for (auto& [algo, paths] : files) std::sort(paths.begin(), paths.end());

  const double nan = std::numeric_limits<double>::quiet_NaN();
  double baseline_final = nan;
  for (const char* ref : {"maxweight", "backpressure", "random"}) {
    auto it = files.find(ref);
    if (it == files.end()) continue;
    std::vector<double> finals;
    for (const auto& p : it->second)
      finals.push_back(detail::scan_metrics_file(p, nan).final_time_avg);
    baseline_final = detail::mean_ci(finals).mean;
    break;
  }

  std::vector<AlgoSummary> out;
  for (const auto& [algo, paths] : files) {
    const bool learning = is_learning_algo(algo_from_name(algo));
    std::vector<double> fts, fms, crosses;
    for (const auto& p : paths) {
      const auto scan =
          detail::scan_metrics_file(p, learning ? baseline_final : nan);
      fts.push_back(scan.final_time_avg);
      if (!std::isnan(scan.final_moving)) fms.push_back(scan.final_moving);
      if (learning && std::isfinite(baseline_final))
        crosses.push_back(scan.crossing);
    }
    AlgoSummary s;
    s.algo = algo;
    s.n = static_cast<int>(paths.size());
    const auto ft = detail::mean_ci(fts);
    s.ft_mean = ft.mean;
    s.ft_ci = ft.ci;
    if (fms.size() == paths.size()) {
      const auto fm = detail::mean_ci(fms);
      s.fm_mean = fm.mean;
      s.fm_ci = fm.ci;
    }
    if (!crosses.empty()) {
      const auto cr = detail::mean_ci(crosses);
      s.cross_mean = cr.mean;
      s.cross_ci = cr.ci;
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string summary_value(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "inf";
  return format_double(v);
}

constexpr const char* kSummaryHeader =
    "algo,seeds,final_time_avg_mean,final_time_avg_ci95,final_moving_avg_mean,"
    "final_moving_avg_ci95,crossing_time_mean,crossing_time_ci95";

inline void write_summary_csv(const std::vector<AlgoSummary>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open summary file: " + path);
  out << kSummaryHeader << "\n";
  for (const auto& s : rows)
    out << s.algo << ',' << s.n << ',' << summary_value(s.ft_mean) << ','
        << summary_value(s.ft_ci) << ',' << summary_value(s.fm_mean) << ','
        << summary_value(s.fm_ci) << ',' << summary_value(s.cross_mean) << ','
        << summary_value(s.cross_ci) << '\n';
}

}  // namespace sqn
