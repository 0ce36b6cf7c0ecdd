#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sqn/env.hpp"

namespace sqn {

enum class BaselineKind { MaxWeight, Backpressure, Randomized };

// argmax_k q_k*y_k over mask-valid links, lowest id on ties, Idle if none
inline Action max_weight(const NetworkState& s) {
  const std::size_t K = s.y.size();
  if (s.q.size() != K)
    throw std::invalid_argument("max_weight: single-hop state required");
  int best = 0;
  long long best_w = -1;
  for (std::size_t k = 0; k < K; ++k) {
    if (s.q[k] <= 0 || s.y[k] <= 0) continue;
    const long long w = s.q[k] * s.y[k];
    if (w > best_w) {
      best_w = w;
      best = static_cast<int>(k) + 1;
    }
  }
  return best == 0 ? Action::idle() : Action::pick_link(best);
}

// classic max-differential rule: full capacity of each link to the class with
// the largest positive backlog gradient, otherwise leave the link unused
inline Action backpressure(const NetworkState& s, const NetworkConfig& cfg,
                           const std::vector<std::uint8_t>& reach) {
  const int K = cfg.num_classes();
  const int M = cfg.num_links();
  const std::size_t cols = static_cast<std::size_t>(K) + 1;
  Action a;
  a.alloc.assign(cols * M, 0);
  for (int m = 0; m < M; ++m) {
    const auto& link = cfg.links[m];
    int best_k = 0;
    long long best_w = 0;  // only strictly positive differentials qualify
    for (int k = 1; k <= K; ++k) {
      if (!reach[static_cast<std::size_t>(m) * K + k - 1]) continue;
      const long long q_i = s.q[q_row(cfg, link.start, k)];
      const long long q_j = link.end == cfg.classes[k - 1].destination
                                ? 0
                                : s.q[q_row(cfg, link.end, k)];
      const long long w = q_i - q_j;
      if (w > best_w) {
        best_w = w;
        best_k = k;
      }
    }
    a.alloc[m * cols + best_k] = s.y[m];  // best_k == 0 parks it in unused
  }
  return a;
}

inline Action randomized_policy(const NetworkState& s, const NetworkConfig& cfg,
                                const std::vector<std::uint8_t>& reach,
                                RandomStream& rng) {
  if (cfg.kind == TaskKind::SingleHop) {
    auto mask = work_conserving_mask(s);
    std::vector<int> valid;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) valid.push_back(static_cast<int>(i));
    const int pick = valid[static_cast<std::size_t>(rng.uniform() * valid.size())];
    return pick == static_cast<int>(s.y.size()) ? Action::idle()
                                                : Action::pick_link(pick + 1);
  }

  const int K = cfg.num_classes();
  const int M = cfg.num_links();
  const std::size_t cols = static_cast<std::size_t>(K) + 1;
  Action a;
  a.alloc.assign(cols * M, 0);
  for (int m = 0; m < M; ++m) {
    std::vector<int> allowed;  // column indices: 0 = unused, k = class k
    allowed.push_back(0);
    for (int k = 1; k <= K; ++k)
      if (reach[static_cast<std::size_t>(m) * K + k - 1]) allowed.push_back(k);
    for (int trial = 0; trial < s.y[m]; ++trial) {
      const int col = allowed[static_cast<std::size_t>(rng.uniform() * allowed.size())];
      a.alloc[m * cols + col] += 1;
    }
  }
  return a;
}

struct BaselinePolicy {
  BaselineKind kind = BaselineKind::MaxWeight;

  Action act(const NetworkState& s, const NetworkConfig& cfg,
             const std::vector<std::uint8_t>& reach, RandomStream& rng) const {
    switch (kind) {
      case BaselineKind::MaxWeight:
        return max_weight(s);
      case BaselineKind::Backpressure:
        return backpressure(s, cfg, reach);
      case BaselineKind::Randomized:
        return randomized_policy(s, cfg, reach, rng);
    }
    throw std::logic_error("unknown baseline kind");
  }
};

// default intervention policy for a task family
inline BaselinePolicy default_baseline(const NetworkConfig& cfg) {
  BaselinePolicy p;
  p.kind = cfg.kind == TaskKind::SingleHop ? BaselineKind::MaxWeight
                                           : BaselineKind::Backpressure;
  return p;
}

}  // namespace sqn
