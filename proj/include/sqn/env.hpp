#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqn/config.hpp"
#include "sqn/rng.hpp"

namespace sqn {

struct NetworkState {
  // single-hop: K per-user queues; multi-hop: nodes*K row-major (node-1)*K+(class-1)
  std::vector<long long> q;
  std::vector<int> y;  // current link states, length M
  long long t = 0;
};

inline long long total_backlog(const NetworkState& s) {
  long long sum = 0;
  for (long long v : s.q) sum += v;
  return sum;
}

inline double shape_cost(long long backlog) {
  return -1.0 / (1.0 + static_cast<double>(backlog));
}

struct Action {
  // single-hop: 1..K selects a link, 0 idles; alloc stays empty
  int link = 0;
  // multi-hop: M x (K+1) row-major; column 0 is unused capacity,
  // column k is capacity given to class k
  std::vector<int> alloc;

  static Action idle() { return {}; }
  static Action pick_link(int id) {
    Action a;
    a.link = id;
    return a;
  }
};

struct StepOutcome {
  long long cost = 0;  // total backlog at the start of the slot
  double shaped_cost = 0.0;
  std::vector<int> arrivals;         // per class
  std::vector<long long> delivered;  // per class
};

inline int q_row(const NetworkConfig& cfg, int node, int klass) {
  return (node - 1) * cfg.num_classes() + (klass - 1);
}

// size K+1; entry k-1 = link k usable, entry K = idle
inline std::vector<std::uint8_t> work_conserving_mask(const NetworkState& s) {
  const std::size_t K = s.y.size();
  if (s.q.size() != K)
    throw std::invalid_argument("work_conserving_mask: single-hop state required");
  std::vector<std::uint8_t> mask(K + 1, 0);
  bool any = false;
  for (std::size_t k = 0; k < K; ++k) {
    if (s.q[k] > 0 && s.y[k] > 0) {
      mask[k] = 1;
      any = true;
    }
  }
  mask[K] = any ? 0 : 1;
  return mask;
}

// M x K row-major; entry (m,k) true iff the end node of link m still reaches
// class k's destination
inline std::vector<std::uint8_t> reachability_mask(const NetworkConfig& cfg) {
  if (cfg.kind != TaskKind::MultiHop)
    throw std::invalid_argument("reachability_mask: multi-hop config required");
  const int M = cfg.num_links();
  const int K = cfg.num_classes();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(M) * K, 0);
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < K; ++k)
      mask[static_cast<std::size_t>(m) * K + k] =
          reachable(cfg, cfg.links[m].end, cfg.classes[k].destination) ? 1 : 0;
  return mask;
}

// empty for single-hop tasks, where no routing mask applies
inline std::vector<std::uint8_t> reach_for(const NetworkConfig& cfg) {
  if (cfg.kind == TaskKind::MultiHop) return reachability_mask(cfg);
  return {};
}

inline std::vector<int> sample_arrivals(const NetworkConfig& cfg, RandomStream& rng) {
  std::vector<int> x(cfg.num_classes());
  for (int k = 0; k < cfg.num_classes(); ++k)
    x[k] = cfg.classes[k].arrivals.sample(rng.uniform());
  return x;
}

inline std::vector<int> sample_link_states(const NetworkConfig& cfg, RandomStream& rng) {
  std::vector<int> y(cfg.num_links());
  for (int m = 0; m < cfg.num_links(); ++m)
    y[m] = cfg.links[m].capacity.sample(rng.uniform());
  return y;
}

// Pure single-hop transition given pre-drawn arrivals and next link states.
inline StepOutcome step_single_hop(NetworkState& s, const Action& a,
                                   const NetworkConfig& cfg,
                                   const std::vector<int>& arrivals,
                                   const std::vector<int>& next_y) {
  const int K = cfg.num_classes();
  if (!a.alloc.empty())
    throw std::invalid_argument("multi-hop action passed to single-hop environment");
  if (a.link < 0 || a.link > K)
    throw std::invalid_argument("single-hop action out of range");

  auto mask = work_conserving_mask(s);
  if (a.link == 0) {
    if (!mask[K]) throw std::invalid_argument("idle chosen while a link is serviceable");
  } else if (!mask[a.link - 1]) {
    throw std::invalid_argument("chosen link " + std::to_string(a.link) +
                                " violates the work-conserving mask");
  }

  StepOutcome out;
  out.cost = total_backlog(s);
  out.shaped_cost = shape_cost(out.cost);
  out.delivered.assign(K, 0);

  if (a.link != 0) {
    const int k = a.link - 1;
    const long long served = std::min<long long>(s.q[k], s.y[k]);
    s.q[k] -= served;
    out.delivered[k] = served;
  }
  for (int k = 0; k < K; ++k) s.q[k] += arrivals[k];
  out.arrivals = arrivals;
  s.y = next_y;
  s.t += 1;
  return out;
}

inline StepOutcome step_single_hop(NetworkState& s, const Action& a,
                                   const NetworkConfig& cfg, RandomStream& arrival_rng,
                                   RandomStream& link_rng) {
  auto arrivals = sample_arrivals(cfg, arrival_rng);
  auto next_y = sample_link_states(cfg, link_rng);
  return step_single_hop(s, a, cfg, arrivals, next_y);
}

// Pure multi-hop transition. Links are processed in ascending id order and
// classes in ascending id order inside each link; allocations beyond the
// queue content are truncated. Packets move one hop per slot: additions to
// receiving nodes are staged until every link has been processed.
inline StepOutcome step_multi_hop(NetworkState& s, const Action& a,
                                  const NetworkConfig& cfg,
                                  const std::vector<int>& arrivals,
                                  const std::vector<int>& next_y,
                                  const std::vector<std::uint8_t>& reach) {
  const int K = cfg.num_classes();
  const int M = cfg.num_links();
  const std::size_t cols = static_cast<std::size_t>(K) + 1;
  if (a.alloc.size() != cols * M)
    throw std::invalid_argument("multi-hop action must be an M x (K+1) matrix");

  for (int m = 0; m < M; ++m) {
    long long row_sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      int v = a.alloc[m * cols + c];
      if (v < 0) throw std::invalid_argument("negative allocation");
      row_sum += v;
    }
    if (row_sum != s.y[m])
      throw std::invalid_argument("allocation row " + std::to_string(m + 1) +
                                  " does not sum to the link state");
    for (int k = 1; k <= K; ++k) {
      if (a.alloc[m * cols + k] > 0 && !reach[static_cast<std::size_t>(m) * K + k - 1])
        throw std::invalid_argument("allocation routes class " + std::to_string(k) +
                                    " over link " + std::to_string(m + 1) +
                                    " away from its destination");
    }
  }

  StepOutcome out;
  out.cost = total_backlog(s);
  out.shaped_cost = shape_cost(out.cost);
  out.delivered.assign(K, 0);

  std::vector<long long> staged(s.q.size(), 0);
  for (int m = 0; m < M; ++m) {
    const auto& link = cfg.links[m];
    for (int k = 1; k <= K; ++k) {
      const int want = a.alloc[m * cols + k];
      if (want == 0) continue;
      const int row = q_row(cfg, link.start, k);
      const long long send = std::min<long long>(s.q[row], want);
      if (send == 0) continue;
      s.q[row] -= send;
      if (link.end == cfg.classes[k - 1].destination)
        out.delivered[k - 1] += send;
      else
        staged[q_row(cfg, link.end, k)] += send;
    }
  }
  for (std::size_t i = 0; i < s.q.size(); ++i) s.q[i] += staged[i];

  for (int k = 1; k <= K; ++k)
    s.q[q_row(cfg, cfg.classes[k - 1].source, k)] += arrivals[k - 1];
  out.arrivals = arrivals;
  s.y = next_y;
  s.t += 1;
  return out;
}

inline StepOutcome step_multi_hop(NetworkState& s, const Action& a,
                                  const NetworkConfig& cfg, RandomStream& arrival_rng,
                                  RandomStream& link_rng,
                                  const std::vector<std::uint8_t>& reach) {
  auto arrivals = sample_arrivals(cfg, arrival_rng);
  auto next_y = sample_link_states(cfg, link_rng);
  return step_multi_hop(s, a, cfg, arrivals, next_y, reach);
}

// Owns config, state, and the arrival/link streams of one running network.
class Network {
 public:
  Network(NetworkConfig cfg, std::uint64_t experiment_seed)
      : cfg_(std::move(cfg)),
        arrival_rng_(experiment_seed, StreamId::Arrivals),
        link_rng_(experiment_seed, StreamId::Links) {
    if (cfg_.kind == TaskKind::MultiHop) reach_ = reachability_mask(cfg_);
    state_.q.assign(cfg_.queue_rows(), 0);
    state_.t = 0;
    state_.y = sample_link_states(cfg_, link_rng_);
  }

  const NetworkConfig& config() const { return cfg_; }
  const NetworkState& state() const { return state_; }
  const std::vector<std::uint8_t>& reach() const { return reach_; }
  long long backlog() const { return total_backlog(state_); }

  StepOutcome step(const Action& a) {
    if (cfg_.kind == TaskKind::SingleHop)
      return step_single_hop(state_, a, cfg_, arrival_rng_, link_rng_);
    return step_multi_hop(state_, a, cfg_, arrival_rng_, link_rng_, reach_);
  }

  // checkpoint plumbing
  std::string save_arrival_rng() const { return arrival_rng_.save(); }
  std::string save_link_rng() const { return link_rng_.save(); }
  void restore_rngs(const std::string& arrivals, const std::string& links) {
    arrival_rng_.restore(arrivals);
    link_rng_.restore(links);
  }
  void restore_state(NetworkState s) { state_ = std::move(s); }

 private:
  NetworkConfig cfg_;
  NetworkState state_;
  RandomStream arrival_rng_;
  RandomStream link_rng_;
  std::vector<std::uint8_t> reach_;
};

}  // namespace sqn
