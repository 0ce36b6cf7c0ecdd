#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "sqn/builtin.hpp"
#include "sqn/train.hpp"

using namespace sqn;

namespace {

const char* kNullTrafficJson = R"({
  "name": "null-sh",
  "kind": "single-hop",
  "classes": [
    {"id": 1, "source": 1, "destination": 0,
     "arrival_values": [0], "arrival_probs": [1.0]}
  ],
  "links": [
    {"id": 1, "start": 1, "end": 0,
     "capacity_values": [1], "capacity_probs": [1.0]}
  ]
})";

// single step, single valid-looking state: q=(1,1), y=(1,1) on sh1 so both
// links are feasible and idle is masked
Trajectory one_step_traj(const Action& a, double behavior_logp, int intervened,
                         double shaped = -1.0 / 3.0) {
  Trajectory traj;
  NetworkState s;
  s.q = {1, 1};
  s.y = {1, 1};
  traj.states = {s, s};
  traj.actions = {a};
  traj.backlog = {2, 2};
  traj.phi = {1.0, 1.0};
  traj.shaped = {shaped};
  traj.intervened = {static_cast<std::uint8_t>(intervened)};
  traj.logp = {behavior_logp};
  return traj;
}

// actor whose masked softmax on that state yields p(link1) = exp(-0.5)
Mlp frozen_actor(const NetworkConfig& cfg) {
  Mlp actor = Mlp::make(actor_input_dim(cfg), {64, 64}, actor_output_dim(cfg));
  actor.layers.back().b[0] = -0.5;
  actor.layers.back().b[1] = std::log(1.0 - std::exp(-0.5));
  return actor;
}

double fd_loss(const Mlp& net, const std::function<double(const Mlp&)>& f,
               std::vector<double> flat, std::size_t i, double h) {
  Mlp probe = net;
  flat[i] += h;
  probe.unflatten(flat);
  return f(probe);
}

void check_gradient(const Mlp& net, const std::function<double(const Mlp&)>& f,
                    const GradBundle& analytic, double h = 1e-5,
                    double tol = 1e-4) {
  const auto flat = net.flatten();
  std::vector<double> grad_flat;
  for (const auto& l : analytic.g) {
    grad_flat.insert(grad_flat.end(), l.w.a.begin(), l.w.a.end());
    grad_flat.insert(grad_flat.end(), l.b.begin(), l.b.end());
  }
  REQUIRE(grad_flat.size() == flat.size());
  double worst = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double up = fd_loss(net, f, flat, i, h);
    const double dn = fd_loss(net, f, flat, i, -h);
    const double fd = (up - dn) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad_flat[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - grad_flat[i]) / denom);
  }
  REQUIRE(worst < tol);
}

std::vector<double> bundle_flat(const GradBundle& b) {
  std::vector<double> out;
  for (const auto& l : b.g) {
    out.insert(out.end(), l.w.a.begin(), l.w.a.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

}  // namespace

TEST_CASE("eta estimate is the mean shaped cost") {
  Trajectory traj;
  traj.shaped = {-1.0, -0.5};
  traj.intervened = {1, 0};
  REQUIRE(estimate_eta(traj) == Catch::Approx(-0.75).margin(1e-15));
  Trajectory empty;
  REQUIRE_THROWS_AS(estimate_eta(empty), std::invalid_argument);
}

TEST_CASE("training config and algorithm names validate") {
  TrainConfig tc;
  REQUIRE_NOTHROW(tc.validate());
  auto bad = [&](auto&& mutate) {
    TrainConfig t;
    mutate(t);
    REQUIRE_THROWS_AS(t.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& t) { t.clip = 0.0; });
  bad([](TrainConfig& t) { t.clip = 1.0; });
  bad([](TrainConfig& t) { t.clip = -0.1; });
  bad([](TrainConfig& t) { t.lambda = -0.1; });
  bad([](TrainConfig& t) { t.lambda = 1.5; });
  bad([](TrainConfig& t) { t.epochs = -1; });
  bad([](TrainConfig& t) { t.minibatches = 0; });
  bad([](TrainConfig& t) { t.te = 0; });

  for (auto a : {Algo::IaPpo, Algo::IaPg, Algo::AcPpo, Algo::MaxWeight,
                 Algo::Backpressure, Algo::Randomized})
    REQUIRE(algo_from_name(algo_name(a)) == a);
  REQUIRE_THROWS_AS(algo_from_name("sarsa"), std::invalid_argument);
}

TEST_CASE("advantage recursion matches its defining forms") {
  auto cfg = builtin_config("sh1");
  Network env(cfg, 99);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(99, StreamId::Policy);
  InterventionGate gate;  // sentinel: baseline everywhere
  auto traj = rollout(env, Mlp::make(4, {8}, 3), pi0, gate, 40, prng);

  Mlp critic = Mlp::make(actor_input_dim(cfg), {16}, 1);
  RandomStream init(5, StreamId::Init);
  init_orthogonal(critic, init, std::sqrt(2.0), 1.0);
  const double eta = estimate_eta(traj);

  SECTION("lambda=0 reduces to the one-step temporal difference") {
    auto res = gae_advantages(traj, critic, 0.0, eta);
    for (int t = 0; t < traj.length(); ++t) {
      const double delta =
          traj.shaped[t] - eta + res.values[t + 1] - res.values[t];
      REQUIRE(res.advantages[t] == Catch::Approx(delta).margin(1e-12));
      REQUIRE(res.value_targets[t] ==
              Catch::Approx(res.advantages[t] + res.values[t]).margin(1e-12));
    }
  }

  SECTION("lambda=1 telescopes to cost-to-go plus terminal value") {
    auto res = gae_advantages(traj, critic, 1.0, eta);
    for (int t = 0; t < traj.length(); ++t) {
      double expect = res.values[traj.length()] - res.values[t];
      for (int l = t; l < traj.length(); ++l) expect += traj.shaped[l] - eta;
      REQUIRE(res.advantages[t] == Catch::Approx(expect).margin(1e-9));
    }
  }

  SECTION("intermediate lambda satisfies the backward recursion") {
    auto res = gae_advantages(traj, critic, 0.7, eta);
    for (int t = 0; t < traj.length() - 1; ++t) {
      const double delta =
          traj.shaped[t] - eta + res.values[t + 1] - res.values[t];
      REQUIRE(res.advantages[t] ==
              Catch::Approx(delta + 0.7 * res.advantages[t + 1]).margin(1e-12));
    }
  }

  SECTION("lambda outside [0,1] is rejected") {
    REQUIRE_THROWS_AS(gae_advantages(traj, critic, -0.1, eta),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(gae_advantages(traj, critic, 1.5, eta),
                      std::invalid_argument);
  }
}

TEST_CASE("advantages vanish when the critic is exact and cost is flat") {
  auto cfg = load_config_text(kNullTrafficJson);
  Network env(cfg, 3);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(3, StreamId::Policy);
  InterventionGate gate;
  gate.enabled = false;
  Mlp actor = Mlp::make(actor_input_dim(cfg), {8}, actor_output_dim(cfg));
  auto traj = rollout(env, actor, pi0, gate, 64, prng);

  for (long long b : traj.backlog) REQUIRE(b == 0);  // nothing ever arrives
  Mlp critic = Mlp::make(actor_input_dim(cfg), {8}, 1);
  auto res = gae_advantages(traj, critic, 0.95, estimate_eta(traj));
  for (double a : res.advantages) REQUIRE(a == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("advantage normalization covers only actor-controlled steps") {
  std::vector<double> adv = {4.0, -2.0, 100.0, 6.0};
  std::vector<std::uint8_t> mask = {0, 0, 1, 0};
  auto out = normalize_advantages(adv, mask);
  REQUIRE(out[2] == 0.0);
  const double mean = (4.0 - 2.0 + 6.0) / 3.0;
  double var = 0;
  for (double a : {4.0, -2.0, 6.0}) var += (a - mean) * (a - mean);
  var /= 3.0;
  const double sd = std::sqrt(var) + 1e-8;
  REQUIRE(out[0] == Catch::Approx((4.0 - mean) / sd).margin(1e-12));
  REQUIRE(out[1] == Catch::Approx((-2.0 - mean) / sd).margin(1e-12));
  REQUIRE(out[3] == Catch::Approx((6.0 - mean) / sd).margin(1e-12));
  REQUIRE(out[0] + out[1] + out[3] == Catch::Approx(0.0).margin(1e-12));

  // fewer than two free steps: passthrough
  std::vector<std::uint8_t> nearly_all = {1, 1, 0, 1};
  auto solo = normalize_advantages(adv, nearly_all);
  REQUIRE(solo[2] == 100.0);
  REQUIRE(solo[0] == 0.0);
}

TEST_CASE("policy gradient loss worked example") {
  auto cfg = builtin_config("sh1");
  auto reach = reach_for(cfg);
  Mlp actor = frozen_actor(cfg);
  auto traj = one_step_traj(Action::pick_link(1), 0.0, 0);
  std::vector<double> adv = {2.0};
  std::vector<double> vt = {0.0};
  auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);

  SECTION("single free step: advantage times log-probability") {
    auto grads = GradBundle::like(actor);
    const double loss = ia_pg_loss(batch, actor, &grads);
    REQUIRE(loss == Catch::Approx(-1.0).margin(1e-9));
    bool any = false;
    for (double g : bundle_flat(grads))
      if (g != 0.0) any = true;
    REQUIRE(any);
  }

  SECTION("intervened steps contribute nothing, not even gradient") {
    traj.intervened[0] = 1;
    auto grads = GradBundle::like(actor);
    REQUIRE(ia_pg_loss(batch, actor, &grads) == 0.0);
    for (double g : bundle_flat(grads)) REQUIRE(g == 0.0);

    adv[0] = 1e9;  // advantage at a masked step is inert
    REQUIRE(ia_pg_loss(batch, actor) == 0.0);
  }
}

TEST_CASE("clipped surrogate worked examples") {
  auto cfg = builtin_config("sh1");
  auto reach = reach_for(cfg);
  Mlp actor = frozen_actor(cfg);

  // behavior log-prob exactly as the current actor would produce it
  Activations acts;
  std::vector<double> dlogits;
  auto probe = one_step_traj(Action::pick_link(1), 0.0, 0);
  const double lp = policy_log_prob_and_grad(actor, probe.states[0], cfg, reach,
                                             probe.actions[0], acts, dlogits);
  REQUIRE(lp == Catch::Approx(-0.5).margin(1e-9));

  SECTION("ratio one: objective equals the advantage, gradient flows") {
    auto traj = one_step_traj(Action::pick_link(1), lp, 0);
    std::vector<double> adv = {1.0}, vt = {0.0};
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);
    auto g_ppo = GradBundle::like(actor);
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, false, &g_ppo) ==
            Catch::Approx(1.0).margin(1e-12));
    // identical to the plain policy-gradient pull at ratio 1
    auto g_pg = GradBundle::like(actor);
    ia_pg_loss(batch, actor, &g_pg);
    auto a = bundle_flat(g_ppo);
    auto b = bundle_flat(g_pg);
    bool any = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i] == b[i]);
      if (a[i] != 0.0) any = true;
    }
    REQUIRE(any);
  }

  SECTION("positive advantage, ratio below the band: clipped, gradient dead") {
    auto traj = one_step_traj(Action::pick_link(1), lp - std::log(0.7), 0);
    std::vector<double> adv = {1.0}, vt = {0.0};
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);
    auto grads = GradBundle::like(actor);
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, false, &grads) ==
            Catch::Approx(0.8).margin(1e-12));
    for (double g : bundle_flat(grads)) REQUIRE(g == 0.0);
  }

  SECTION("negative advantage, ratio above the band: clipped, gradient dead") {
    auto traj = one_step_traj(Action::pick_link(1), lp - std::log(1.5), 0);
    std::vector<double> adv = {-1.0}, vt = {0.0};
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);
    auto grads = GradBundle::like(actor);
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, false, &grads) ==
            Catch::Approx(-1.2).margin(1e-12));
    for (double g : bundle_flat(grads)) REQUIRE(g == 0.0);
  }

  SECTION("advantage-clipping variant differs where the ratio collapses") {
    auto traj = one_step_traj(Action::pick_link(1), lp - std::log(0.4), 0);
    std::vector<double> adv = {2.5}, vt = {0.0};
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, false) ==
            Catch::Approx(2.0).margin(1e-12));
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, true) ==
            Catch::Approx(1.2).margin(1e-12));
  }

  SECTION("intervened step silences both value and gradient") {
    auto traj = one_step_traj(Action::pick_link(1), lp, 1);
    std::vector<double> adv = {3.0}, vt = {0.0};
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);
    auto grads = GradBundle::like(actor);
    REQUIRE(ia_ppo_loss(batch, actor, 0.2, false, &grads) == 0.0);
    for (double g : bundle_flat(grads)) REQUIRE(g == 0.0);
  }
}

TEST_CASE("critic loss worked example") {
  auto cfg = builtin_config("sh1");
  auto reach = reach_for(cfg);
  Mlp critic = Mlp::make(actor_input_dim(cfg), {64, 64}, 1);
  critic.layers.back().b[0] = 1.0;  // V == 1 everywhere

  auto traj = one_step_traj(Action::pick_link(1), 0.0, 0);
  std::vector<double> adv = {0.0};
  std::vector<double> vt = {0.5};
  auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);

  REQUIRE(critic_loss(batch, critic, 0.1, 0.0) ==
          Catch::Approx(0.125).margin(1e-12));
  REQUIRE(critic_loss(batch, critic, 0.1, 2.0) ==
          Catch::Approx(0.245).margin(1e-12));
  REQUIRE(critic_loss(batch, critic, 0.0, 2.0) ==
          Catch::Approx(0.125).margin(1e-12));

  // intervened steps still train the critic
  traj.intervened[0] = 1;
  REQUIRE(critic_loss(batch, critic, 0.1, 0.0) ==
          Catch::Approx(0.125).margin(1e-12));
}

TEST_CASE("value-constraint term arrests critic drift") {
  auto cfg = builtin_config("sh1");
  auto reach = reach_for(cfg);

  Trajectory traj;
  for (int i = 0; i < 6; ++i) {
    NetworkState s;
    s.q = {i, 5 - i};
    s.y = {1 + (i % 2), 2 - (i % 2)};
    traj.states.push_back(s);
    traj.actions.push_back(Action::idle());
    traj.shaped.push_back(0.0);
    traj.intervened.push_back(0);
    traj.logp.push_back(0.0);
  }
  traj.states.push_back(traj.states.back());

  auto run = [&](double nu) {
    Mlp critic = Mlp::make(actor_input_dim(cfg), {16}, 1);
    RandomStream init(11, StreamId::Init);
    init_orthogonal(critic, init, std::sqrt(2.0), 1.0);
    AdamState opt = AdamState::like(critic, 0.05);
    double b = 0.0;
    std::vector<double> adv(6, 0.0), targets(6, 0.0);
    auto batch = TrainBatch::whole(traj, cfg, reach, adv, targets);
    for (int epoch = 0; epoch < 100; ++epoch) {
      // targets chase the critic upward: a persistent drift pressure
      for (int t = 0; t < 6; ++t)
        targets[t] = forward(critic, encode_state(traj.states[t]))[0] + 0.5;
      for (int step = 0; step < 10; ++step) {
        auto grads = GradBundle::like(critic);
        critic_loss(batch, critic, nu, b, &grads);
        opt_step(critic, grads, opt);
      }
      double mean_v = 0;
      for (int t = 0; t < 6; ++t)
        mean_v += forward(critic, encode_state(traj.states[t]))[0];
      b = 0.8 * b + 0.2 * mean_v / 6.0;
    }
    double mean_v = 0;
    for (int t = 0; t < 6; ++t)
      mean_v += forward(critic, encode_state(traj.states[t]))[0];
    return std::abs(mean_v / 6.0);
  };

  const double constrained = run(0.1);
  const double unconstrained = run(0.0);
  REQUIRE(constrained < 0.5 * unconstrained);
}

TEST_CASE("rollout honors the gate and records consistent fields") {
  auto cfg = builtin_config("sh1");
  Network env(cfg, 21);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(21, StreamId::Policy);
  ActorCritic ac = make_actor_critic(cfg, 21);

  SECTION("gate disabled: the actor owns every step") {
    InterventionGate gate;
    gate.enabled = false;
    auto traj = rollout(env, ac.actor, pi0, gate, 30, prng);
    REQUIRE(traj.length() == 30);
    REQUIRE(traj.states.size() == 31);
    REQUIRE(traj.backlog.size() == 31);
    REQUIRE(traj.phi.size() == 31);
    REQUIRE(traj.intervention_rate() == 0.0);
    auto reach = reach_for(cfg);
    Activations acts;
    std::vector<double> dlogits;
    for (int t = 0; t < 30; ++t) {
      REQUIRE(traj.shaped[t] ==
              Catch::Approx(-1.0 / (1.0 + traj.backlog[t])).margin(1e-15));
      const double lp = policy_log_prob_and_grad(
          ac.actor, traj.states[t], cfg, reach, traj.actions[t], acts, dlogits);
      REQUIRE(std::exp(lp - traj.logp[t]) == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("sentinel threshold: the baseline owns every step") {
    InterventionGate gate;  // q_star = -1
    const auto before = prng.save();
    auto traj = rollout(env, ac.actor, pi0, gate, 25, prng);
    REQUIRE(traj.intervention_rate() == 1.0);
    for (double lp : traj.logp) REQUIRE(lp == 0.0);
    // deterministic baseline, no actor sampling: stream untouched
    REQUIRE(prng.save() == before);
  }

  SECTION("threshold zero: intervention exactly where backlog is positive") {
    InterventionGate gate;
    gate.q_star = 0.0;
    auto traj = rollout(env, ac.actor, pi0, gate, 200, prng);
    for (int t = 0; t < traj.length(); ++t)
      REQUIRE(traj.intervened[t] == (traj.backlog[t] > 0 ? 1 : 0));
  }

  SECTION("same seeds reproduce the trajectory bit for bit") {
    InterventionGate gate;
    gate.q_star = 1.0;
    Network env_a(cfg, 77), env_b(cfg, 77);
    RandomStream rng_a(77, StreamId::Policy), rng_b(77, StreamId::Policy);
    auto ta = rollout(env_a, ac.actor, pi0, gate, 120, rng_a);
    auto tb = rollout(env_b, ac.actor, pi0, gate, 120, rng_b);
    REQUIRE(ta.backlog == tb.backlog);
    REQUIRE(ta.logp == tb.logp);
    REQUIRE(ta.intervened == tb.intervened);
  }
}

TEST_CASE("rollout on a relay network drives the allocation head") {
  auto cfg = builtin_config("mh1");
  Network env(cfg, 8);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(8, StreamId::Policy);
  ActorCritic ac = make_actor_critic(cfg, 8);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, ac.actor, pi0, gate, 40, prng);
  auto reach = reach_for(cfg);
  Activations acts;
  std::vector<double> dlogits;
  for (int t = 0; t < traj.length(); ++t) {
    const double lp = policy_log_prob_and_grad(
        ac.actor, traj.states[t], cfg, reach, traj.actions[t], acts, dlogits);
    REQUIRE(lp == Catch::Approx(traj.logp[t]).margin(1e-12));
  }
}

TEST_CASE("update phase with zero epochs changes nothing") {
  auto cfg = builtin_config("sh1");
  Network env(cfg, 13);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(13, StreamId::Policy);
  ActorCritic ac = make_actor_critic(cfg, 13);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, ac.actor, pi0, gate, 64, prng);

  const auto actor_before = ac.actor.flatten();
  const auto critic_before = ac.critic.flatten();
  TrainConfig tc;
  tc.epochs = 0;
  auto stats = update_phase(traj, ac, tc, cfg, reach_for(cfg), prng);
  REQUIRE(ac.actor.flatten() == actor_before);
  REQUIRE(ac.critic.flatten() == critic_before);
  REQUIRE(ac.bias_b == 0.0);
  REQUIRE(stats.eta == Catch::Approx(traj.mean_shaped_cost()).margin(1e-15));
}

TEST_CASE("zero advantages leave the actor untouched through a full update") {
  auto cfg = load_config_text(kNullTrafficJson);
  Network env(cfg, 5);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(5, StreamId::Policy);
  ActorCritic ac = make_actor_critic(cfg, 5);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, ac.actor, pi0, gate, 64, prng);

  const auto actor_before = ac.actor.flatten();
  TrainConfig tc;
  tc.epochs = 3;
  update_phase(traj, ac, tc, cfg, reach_for(cfg), prng);
  REQUIRE(ac.actor.flatten() == actor_before);
}

TEST_CASE("update phase learns deterministically") {
  auto cfg = builtin_config("sh2");
  auto reach = reach_for(cfg);
  auto run = [&](Algo algo) {
    Network env(cfg, 31);
    auto pi0 = default_baseline(cfg);
    RandomStream prng(31, StreamId::Policy);
    ActorCritic ac = make_actor_critic(cfg, 31);
    InterventionGate gate;
    gate.q_star = 4.0;
    TrainConfig tc;
    tc.algo = algo;
    tc.epochs = 2;
    tc.te = 128;
    UpdateStats last;
    for (int ep = 0; ep < 3; ++ep) {
      auto traj = rollout(env, ac.actor, pi0, gate, tc.te, prng);
      last = update_phase(traj, ac, tc, cfg, reach, prng);
    }
    return std::make_pair(ac, last);
  };

  auto [ac1, stats1] = run(Algo::IaPpo);
  auto [ac2, stats2] = run(Algo::IaPpo);
  REQUIRE(stats1.eta == stats2.eta);
  REQUIRE(ac1.actor.flatten() == ac2.actor.flatten());
  REQUIRE(ac1.critic.flatten() == ac2.critic.flatten());
  REQUIRE(ac1.bias_b == ac2.bias_b);
  REQUIRE(std::isfinite(stats1.policy_loss));
  REQUIRE(std::isfinite(stats1.critic_loss_value));
  REQUIRE(stats1.eta < 0.0);

  // parameters actually moved and the bias tracker engaged
  ActorCritic fresh = make_actor_critic(cfg, 31);
  REQUIRE(ac1.actor.flatten() != fresh.actor.flatten());
  REQUIRE(ac1.critic.flatten() != fresh.critic.flatten());
  REQUIRE(ac1.bias_b != 0.0);

  auto [ac3, stats3] = run(Algo::IaPg);
  REQUIRE(std::isfinite(stats3.policy_loss));
  REQUIRE(ac3.actor.flatten() != ac1.actor.flatten());
}

TEST_CASE("update phase handles ragged minibatch splits") {
  auto cfg = builtin_config("sh1");
  Network env(cfg, 41);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(41, StreamId::Policy);
  ActorCritic ac = make_actor_critic(cfg, 41);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, ac.actor, pi0, gate, 10, prng);
  TrainConfig tc;
  tc.epochs = 1;
  tc.minibatches = 8;  // sizes 2,2,1,1,1,1,1,1
  REQUIRE_NOTHROW(update_phase(traj, ac, tc, cfg, reach_for(cfg), prng));
}

TEST_CASE("loss gradients agree with finite differences") {
  auto cfg = builtin_config("sh1");
  auto reach = reach_for(cfg);
  Network env(cfg, 17);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(17, StreamId::Policy);

  Mlp actor = Mlp::make(actor_input_dim(cfg), {10, 10}, actor_output_dim(cfg));
  RandomStream init(17, StreamId::Init);
  init_orthogonal(actor, init, std::sqrt(2.0), 0.01);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, actor, pi0, gate, 12, prng);
  for (int t = 0; t < traj.length(); t += 3) {  // plant intervened steps
    traj.intervened[t] = 1;
    traj.logp[t] = 0.0;
  }
  REQUIRE(traj.intervention_rate() > 0.0);
  REQUIRE(traj.intervention_rate() < 1.0);

  std::vector<double> adv(traj.length());
  std::vector<double> vt(traj.length());
  for (int t = 0; t < traj.length(); ++t) {
    adv[t] = std::sin(1.3 * t) + 0.2;
    vt[t] = std::cos(0.9 * t);
  }
  auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);

  SECTION("policy gradient objective") {
    auto grads = GradBundle::like(actor);
    ia_pg_loss(batch, actor, &grads);
    check_gradient(actor,
                   [&](const Mlp& net) { return ia_pg_loss(batch, net); },
                   grads);
  }

  SECTION("clipped surrogate away from the clip boundary") {
    // evaluate under a slightly different actor so ratios leave 1 but stay
    // well inside a wide band
    Mlp shifted = actor;
    auto flat = shifted.flatten();
    for (std::size_t i = 0; i < flat.size(); ++i)
      flat[i] += 0.003 * std::sin(0.37 * static_cast<double>(i));
    shifted.unflatten(flat);

    Activations acts;
    std::vector<double> dlogits;
    for (int t = 0; t < traj.length(); ++t) {
      if (traj.intervened[t]) continue;
      const double lp = policy_log_prob_and_grad(shifted, traj.states[t], cfg,
                                                 reach, traj.actions[t], acts,
                                                 dlogits);
      const double ratio = std::exp(lp - traj.logp[t]);
      REQUIRE(ratio > 0.6);
      REQUIRE(ratio < 1.4);
    }
    auto grads = GradBundle::like(shifted);
    ia_ppo_loss(batch, shifted, 0.5, false, &grads);
    check_gradient(
        shifted,
        [&](const Mlp& net) { return ia_ppo_loss(batch, net, 0.5, false); },
        grads);
  }

  SECTION("critic objective with the constraint term") {
    Mlp critic = Mlp::make(actor_input_dim(cfg), {10, 10}, 1);
    init_orthogonal(critic, init, std::sqrt(2.0), 1.0);
    auto grads = GradBundle::like(critic);
    critic_loss(batch, critic, 0.1, 0.3, &grads);
    check_gradient(
        critic,
        [&](const Mlp& net) { return critic_loss(batch, net, 0.1, 0.3); },
        grads);
  }
}

TEST_CASE("relay-network policy losses pass finite differences") {
  auto cfg = builtin_config("mh1");
  auto reach = reach_for(cfg);
  Network env(cfg, 23);
  auto pi0 = default_baseline(cfg);
  RandomStream prng(23, StreamId::Policy);

  Mlp actor = Mlp::make(actor_input_dim(cfg), {10, 10}, actor_output_dim(cfg));
  RandomStream init(23, StreamId::Init);
  init_orthogonal(actor, init, std::sqrt(2.0), 0.01);
  InterventionGate gate;
  gate.enabled = false;
  auto traj = rollout(env, actor, pi0, gate, 6, prng);

  std::vector<double> adv(traj.length());
  std::vector<double> vt(traj.length(), 0.0);
  for (int t = 0; t < traj.length(); ++t) adv[t] = std::cos(0.8 * t) - 0.1;
  auto batch = TrainBatch::whole(traj, cfg, reach, adv, vt);

  auto grads = GradBundle::like(actor);
  ia_pg_loss(batch, actor, &grads);
  check_gradient(actor,
                 [&](const Mlp& net) { return ia_pg_loss(batch, net); }, grads);
}

TEST_CASE("actor-critic factory is deterministic and well-shaped") {
  auto cfg = builtin_config("mh2");
  ActorCritic a = make_actor_critic(cfg, 123);
  ActorCritic b = make_actor_critic(cfg, 123);
  REQUIRE(a.actor.flatten() == b.actor.flatten());
  REQUIRE(a.critic.flatten() == b.critic.flatten());
  REQUIRE(a.actor.input_dim() == actor_input_dim(cfg));
  REQUIRE(a.actor.output_dim() == actor_output_dim(cfg));
  REQUIRE(a.critic.output_dim() == 1);
  ActorCritic c = make_actor_critic(cfg, 124);
  REQUIRE(a.actor.flatten() != c.actor.flatten());
}
