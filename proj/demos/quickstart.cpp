// Minimal end-to-end walkthrough: estimate a backlog threshold under the
// stabilizing scheduler, then train a gated policy-gradient agent against it.

#include <iostream>

#include "sqn/builtin.hpp"
#include "sqn/drift.hpp"
#include "sqn/experiment.hpp"

int main() {
  const sqn::NetworkConfig net = sqn::builtin_config("sh1");

  // Pilot: run MaxWeight until the backlog time-average settles, bucket the
  // quadratic drift by backlog level, and read off where it crosses omega.
  sqn::Network pilot_env(net, /*seed=*/1);
  sqn::RandomStream pilot_rng(1, sqn::StreamId::Policy);
  const sqn::BaselinePolicy pi0 = sqn::default_baseline(net);
  const auto pilot = sqn::run_pilot(pilot_env, pi0, 100000, 0.01, pilot_rng);
  const auto est = sqn::estimate_threshold(pilot.traj, /*omega=*/-0.1);
  std::cout << "pilot: " << pilot.t0 << " steps, threshold q* = "
            << est.weighted << "\n";

  // Training: the gate hands control to MaxWeight whenever backlog exceeds
  // q*, so the untrained actor can only do bounded damage while it learns.
  sqn::ExperimentConfig cfg;
  cfg.config_json = sqn::builtin_json("sh1");
  cfg.net = net;
  cfg.train.algo = sqn::Algo::IaPpo;
  cfg.train.te = 512;
  cfg.t_end = 30000;
  cfg.e0 = 20;
  cfg.seeds = {1};
  cfg.out_dir = "quickstart_out";
  cfg.validate();
  sqn::run_experiment(cfg);

  const auto rows = sqn::summarize_dir(cfg.out_dir);
  for (const auto& r : rows)
    std::cout << r.algo << ": final time-averaged backlog = "
              << sqn::summary_value(r.ft_mean) << "\n";
  std::cout << "metrics in " << cfg.out_dir << "/ia-ppo_seed1.csv\n";
  return 0;
}
