#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqn/baselines.hpp"
#include "sqn/drift.hpp"
#include "sqn/heads.hpp"
#include "sqn/mlp.hpp"
#include "sqn/trajectory.hpp"

namespace sqn {

enum class Algo { IaPpo, IaPg, AcPpo, MaxWeight, Backpressure, Randomized };

inline bool is_learning_algo(Algo a) {
  return a == Algo::IaPpo || a == Algo::IaPg || a == Algo::AcPpo;
}

inline std::string algo_name(Algo a) {
  switch (a) {
    case Algo::IaPpo: return "ia-ppo";
    case Algo::IaPg: return "ia-pg";
    case Algo::AcPpo: return "ac-ppo";
    case Algo::MaxWeight: return "maxweight";
    case Algo::Backpressure: return "backpressure";
    case Algo::Randomized: return "random";
  }
  return "?";
}

inline Algo algo_from_name(const std::string& s) {
  if (s == "ia-ppo") return Algo::IaPpo;
  if (s == "ia-pg") return Algo::IaPg;
  if (s == "ac-ppo") return Algo::AcPpo;
  if (s == "maxweight") return Algo::MaxWeight;
  if (s == "backpressure") return Algo::Backpressure;
  if (s == "random") return Algo::Randomized;
  throw std::invalid_argument("unknown algorithm: " + s);
}

struct TrainConfig {
  Algo algo = Algo::IaPpo;
  int te = 2048;          // rollout length per episode
  int epochs = 5;         // update epochs U per trajectory
  int minibatches = 8;
  double clip = 0.2;
  double lambda = 0.95;
  double lr = 3e-4;
  bool literal_clip = false;       // clip the advantage itself, not the ratio
  bool normalize_advantages = true;

  void validate() const {
    if (clip <= 0.0 || clip >= 1.0) throw std::invalid_argument("clip must be in (0,1)");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (minibatches < 1) throw std::invalid_argument("minibatches must be >= 1");
    if (lambda < 0.0 || lambda > 1.0)
      throw std::invalid_argument("lambda must be in [0,1]");
    if (te < 1) throw std::invalid_argument("episode length must be >= 1");
  }
};

// actor+critic pair with optimizer and average-value constraint state
struct ActorCritic {
  Mlp actor, critic;
  AdamState actor_opt, critic_opt;
  double bias_b = 0.0;
  double nu = 0.1;
  double bias_ema = 0.2;
};

inline ActorCritic make_actor_critic(const NetworkConfig& cfg, std::uint64_t seed,
                                     double lr = 3e-4) {
  ActorCritic ac;
  ac.actor = Mlp::make(actor_input_dim(cfg), {64, 64}, actor_output_dim(cfg));
  ac.critic = Mlp::make(actor_input_dim(cfg), {64, 64}, 1);
  RandomStream init(seed, StreamId::Init);
  init_orthogonal(ac.actor, init, std::sqrt(2.0), 0.01);
  init_orthogonal(ac.critic, init, std::sqrt(2.0), 1.0);
  ac.actor_opt = AdamState::like(ac.actor, lr);
  ac.critic_opt = AdamState::like(ac.critic, lr);
  return ac;
}

// One episode under the intervention-gated mixture: the baseline acts where
// the gate fires, the actor everywhere else. Environment state carries over.
inline Trajectory rollout(Network& env, const Mlp& actor, const BaselinePolicy& pi0,
                          const InterventionGate& gate, int steps,
                          RandomStream& policy_rng) {
  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.actions.reserve(steps);
  traj.backlog.reserve(steps + 1);
  traj.phi.reserve(steps + 1);
  traj.shaped.reserve(steps);
  traj.intervened.reserve(steps);
  traj.logp.reserve(steps);

  const auto& cfg = env.config();
  for (int t = 0; t < steps; ++t) {
    const NetworkState& s = env.state();
    const long long backlog = total_backlog(s);
    traj.states.push_back(s);
    traj.backlog.push_back(backlog);
    traj.phi.push_back(lyapunov(s));
    traj.shaped.push_back(shape_cost(backlog));

    Action a;
    double logp = 0.0;
    const bool intervene = gate.intervene(backlog);
    if (intervene)
      a = pi0.act(s, cfg, env.reach(), policy_rng);
    else
      a = sample_policy_action(actor, s, cfg, env.reach(), policy_rng, &logp);
    traj.intervened.push_back(intervene ? 1 : 0);
    traj.logp.push_back(intervene ? 0.0 : logp);
    traj.actions.push_back(std::move(a));
    env.step(traj.actions.back());
  }
  traj.states.push_back(env.state());
  traj.backlog.push_back(env.backlog());
  traj.phi.push_back(lyapunov(env.state()));
  return traj;
}

inline double estimate_eta(const Trajectory& traj) {
  if (traj.length() == 0) throw std::invalid_argument("empty trajectory");
  return traj.mean_shaped_cost();
}

inline std::vector<double> critic_values(const Mlp& critic, const Trajectory& traj) {
  std::vector<double> v(traj.states.size());
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    v[i] = forward(critic, encode_state(traj.states[i]))[0];
  return v;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
  std::vector<double> values;  // V(s_t), length T+1
};

// average-cost GAE: delta_t = c'_t - eta + V(s_{t+1}) - V(s_t), lambda-mixed
// without a discount factor
inline GaeResult gae_advantages(const Trajectory& traj, const Mlp& critic,
                                double lambda, double eta) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must be in [0,1]");
  const int T = traj.length();
  GaeResult res;
  res.values = critic_values(critic, traj);
  res.advantages.assign(T, 0.0);
  res.value_targets.assign(T, 0.0);
  double acc = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const double delta = traj.shaped[t] - eta + res.values[t + 1] - res.values[t];
    acc = delta + lambda * acc;
    res.advantages[t] = acc;
    res.value_targets[t] = acc + res.values[t];
  }
  return res;
}

// zero-mean unit-variance over non-intervened steps; intervened entries are
// zeroed (they never reach the policy loss)
inline std::vector<double> normalize_advantages(const std::vector<double>& adv,
                                                const std::vector<std::uint8_t>& mask) {
  std::vector<double> out(adv.size(), 0.0);
  double mean = 0;
  long long n = 0;
  for (std::size_t t = 0; t < adv.size(); ++t)
    if (!mask[t]) {
      mean += adv[t];
      ++n;
    }
  if (n < 2) {
    for (std::size_t t = 0; t < adv.size(); ++t)
      if (!mask[t]) out[t] = adv[t];
    return out;
  }
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t t = 0; t < adv.size(); ++t)
    if (!mask[t]) var += (adv[t] - mean) * (adv[t] - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var) + 1e-8;
  for (std::size_t t = 0; t < adv.size(); ++t)
    if (!mask[t]) out[t] = (adv[t] - mean) / sd;
  return out;
}

// A view of selected trajectory steps plus the arrays the losses consume.
struct TrainBatch {
  const Trajectory* traj = nullptr;
  const NetworkConfig* cfg = nullptr;
  const std::vector<std::uint8_t>* reach = nullptr;
  const std::vector<double>* adv = nullptr;       // policy advantages
  const std::vector<double>* vtarget = nullptr;   // critic targets
  std::vector<int> idx;

  static TrainBatch whole(const Trajectory& traj, const NetworkConfig& cfg,
                          const std::vector<std::uint8_t>& reach,
                          const std::vector<double>& adv,
                          const std::vector<double>& vtarget) {
    TrainBatch b;
    b.traj = &traj;
    b.cfg = &cfg;
    b.reach = &reach;
    b.adv = &adv;
    b.vtarget = &vtarget;
    b.idx.resize(traj.length());
    for (int t = 0; t < traj.length(); ++t) b.idx[t] = t;
    return b;
  }
};

// L = (1/T) sum (1-I) A log pi; gradient descent pushes probability away from
// costly actions. Pass `into` to accumulate parameter gradients.
inline double ia_pg_loss(const TrainBatch& batch, const Mlp& actor,
                         GradBundle* into = nullptr) {
  const double inv = 1.0 / static_cast<double>(batch.idx.size());
  double loss = 0;
  Activations acts;
  std::vector<double> dlogits;
  for (int t : batch.idx) {
    if (batch.traj->intervened[t]) continue;
    const double a = (*batch.adv)[t];
    const double lp = policy_log_prob_and_grad(actor, batch.traj->states[t],
                                               *batch.cfg, *batch.reach,
                                               batch.traj->actions[t], acts, dlogits);
    loss += inv * a * lp;
    if (into) {
      for (auto& g : dlogits) g *= inv * a;
      backward(actor, acts, dlogits, *into);
    }
  }
  return loss;
}

// clipped surrogate on the cost advantage:
//   term = max(A R, clip(R, 1-eps, 1+eps) A)        (standard form)
//   term = max(A R, clip(A, 1-eps, 1+eps))          (literal printed form)
inline double ia_ppo_loss(const TrainBatch& batch, const Mlp& actor, double eps,
                          bool literal_clip = false, GradBundle* into = nullptr) {
  const double inv = 1.0 / static_cast<double>(batch.idx.size());
  double loss = 0;
  Activations acts;
  std::vector<double> dlogits;
  for (int t : batch.idx) {
    if (batch.traj->intervened[t]) continue;
    const double a = (*batch.adv)[t];
    const double lp = policy_log_prob_and_grad(actor, batch.traj->states[t],
                                               *batch.cfg, *batch.reach,
                                               batch.traj->actions[t], acts, dlogits);
    const double ratio = std::exp(lp - batch.traj->logp[t]);
    if (!std::isfinite(ratio)) throw std::runtime_error("non-finite policy ratio");

    const double unclipped = a * ratio;
    const double other = literal_clip
                             ? std::clamp(a, 1.0 - eps, 1.0 + eps)
                             : std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a;
    double dterm_dlogp = 0.0;  // d term / d log pi
    double term;
    if (unclipped >= other) {
      term = unclipped;
      dterm_dlogp = a * ratio;
    } else {
      term = other;
      if (!literal_clip && ratio > 1.0 - eps && ratio < 1.0 + eps)
        dterm_dlogp = a * ratio;  // clip inactive inside the band
    }
    loss += inv * term;
    if (into && dterm_dlogp != 0.0) {
      for (auto& g : dlogits) g *= inv * dterm_dlogp;
      backward(actor, acts, dlogits, *into);
    }
  }
  return loss;
}

// L = (1/T) sum 0.5 (V(s_t) - target + nu b)^2 over every step, intervened or
// not
inline double critic_loss(const TrainBatch& batch, const Mlp& critic, double nu,
                          double bias_b, GradBundle* into = nullptr) {
  const double inv = 1.0 / static_cast<double>(batch.idx.size());
  double loss = 0;
  Activations acts;
  for (int t : batch.idx) {
    const double v =
        forward_cached(critic, encode_state(batch.traj->states[t]), acts)[0];
    const double err = v - (*batch.vtarget)[t] + nu * bias_b;
    loss += inv * 0.5 * err * err;
    if (into) backward(critic, acts, {inv * err}, *into);
  }
  return loss;
}

struct UpdateStats {
  double eta = 0.0;
  double policy_loss = 0.0;
  double critic_loss_value = 0.0;
};

// Algorithm core: advantages from the pre-update critic, then U epochs of
// shuffled minibatch steps on policy and critic, then the bias EMA.
inline UpdateStats update_phase(const Trajectory& traj, ActorCritic& ac,
                                const TrainConfig& tc, const NetworkConfig& cfg,
                                const std::vector<std::uint8_t>& reach,
                                RandomStream& policy_rng) {
  tc.validate();
  UpdateStats stats;
  stats.eta = estimate_eta(traj);
  auto gae = gae_advantages(traj, ac.critic, tc.lambda, stats.eta);
  const std::vector<double> policy_adv =
      tc.normalize_advantages ? normalize_advantages(gae.advantages, traj.intervened)
                              : gae.advantages;

  const int T = traj.length();
  std::vector<int> order(T);
  for (int t = 0; t < T; ++t) order[t] = t;

  auto actor_grads = GradBundle::like(ac.actor);
  auto critic_grads = GradBundle::like(ac.critic);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    // Fisher-Yates with the policy stream
    for (int i = T - 1; i > 0; --i) {
      const int j = static_cast<int>(policy_rng.uniform() * (i + 1));
      std::swap(order[i], order[j]);
    }
    const int base = T / tc.minibatches;
    const int extra = T % tc.minibatches;
    int pos = 0;
    for (int mb = 0; mb < tc.minibatches; ++mb) {
      const int size = base + (mb < extra ? 1 : 0);
      if (size == 0) continue;
      TrainBatch batch;
      batch.traj = &traj;
      batch.cfg = &cfg;
      batch.reach = &reach;
      batch.adv = &policy_adv;
      batch.vtarget = &gae.value_targets;
      batch.idx.assign(order.begin() + pos, order.begin() + pos + size);
      pos += size;

      actor_grads.zero();
      stats.policy_loss =
          tc.algo == Algo::IaPg
              ? ia_pg_loss(batch, ac.actor, &actor_grads)
              : ia_ppo_loss(batch, ac.actor, tc.clip, tc.literal_clip, &actor_grads);
      opt_step(ac.actor, actor_grads, ac.actor_opt);

      critic_grads.zero();
      stats.critic_loss_value =
          critic_loss(batch, ac.critic, ac.nu, ac.bias_b, &critic_grads);
      opt_step(ac.critic, critic_grads, ac.critic_opt);
    }
    // average-value constraint: track the mean value under the fresh critic
    double mean_v = 0;
    for (int t = 0; t < T; ++t)
      mean_v += forward(ac.critic, encode_state(traj.states[t]))[0];
    mean_v /= static_cast<double>(T);
    ac.bias_b = (1.0 - ac.bias_ema) * ac.bias_b + ac.bias_ema * mean_v;
  }
  return stats;
}

}  // namespace sqn
