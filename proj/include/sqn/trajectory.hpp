#pragma once

#include <cstdint>
#include <vector>

#include "sqn/env.hpp"

namespace sqn {

// Columnar record of one rollout. Entries indexed by step t hold the values
// observed BEFORE that step; backlog and phi carry one extra entry for the
// state the rollout ended in. states/actions are kept only when the caller
// needs to re-evaluate the policy (training), not for pilot runs.
struct Trajectory {
  std::vector<NetworkState> states;     // length T+1 when kept
  std::vector<Action> actions;          // length T when kept
  std::vector<long long> backlog;       // length T+1
  std::vector<double> phi;              // length T+1
  std::vector<double> shaped;           // length T
  std::vector<std::uint8_t> intervened; // length T
  std::vector<double> logp;             // length T; 0 on intervened steps

  int length() const { return static_cast<int>(shaped.size()); }

  double intervention_rate() const {
    if (intervened.empty()) return 0.0;
    double s = 0;
    for (auto v : intervened) s += v;
    return s / static_cast<double>(intervened.size());
  }

  double mean_shaped_cost() const {
    if (shaped.empty()) return 0.0;
    double s = 0;
    for (double v : shaped) s += v;
    return s / static_cast<double>(shaped.size());
  }
};

}  // namespace sqn
