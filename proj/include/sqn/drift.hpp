#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqn/baselines.hpp"
#include "sqn/env.hpp"
#include "sqn/trajectory.hpp"

namespace sqn {

// quadratic Lyapunov function of the queue state
inline double lyapunov(const NetworkState& s) {
  double phi = 0;
  for (long long v : s.q) phi += 0.5 * static_cast<double>(v) * static_cast<double>(v);
  return phi;
}

struct InterventionGate {
  double q_star = -1.0;  // -1 before estimation: intervene on every state
  double omega = -0.1;
  double gamma = 0.1;
  double r_min = 0.05;
  bool enabled = true;

  bool intervene(long long backlog) const {
    return enabled && static_cast<double>(backlog) > q_star;
  }

  // q_star_{k+1} = q_star_k + gamma (1 - R) 1(R > r_min); never decreases
  void update(double intervention_rate) {
    if (!enabled) return;
    if (intervention_rate > r_min) q_star += gamma * (1.0 - intervention_rate);
  }
};

struct DriftBucket {
  long long qbar = 0;
  long long count = 0;
  double raw = 0.0;
  double smoothed = 0.0;
};

struct ThresholdEstimate {
  double point = 0.0;
  double weighted = 0.0;
  bool fallback = false;  // smoothed series never settled below omega
  std::vector<DriftBucket> table;  // kept buckets, ascending q̄
};

namespace detail {

struct BucketStat {
  long long count = 0;
  double sum = 0.0;
};

// numeric guard so a bucket exactly at omega is not treated as below it
constexpr double kOmegaSlack = 1e-9;

inline ThresholdEstimate estimate_from_buckets(
    const std::map<long long, BucketStat>& buckets, double omega) {
  if (buckets.empty()) throw std::invalid_argument("empty drift table");

  std::vector<DriftBucket> all;
  all.reserve(buckets.size());
  long long total_count = 0;
  for (const auto& [qbar, st] : buckets) {
    all.push_back({qbar, st.count, st.sum / static_cast<double>(st.count), 0.0});
    total_count += st.count;
  }

  // drop the largest 5% of distinct backlog values: their counts are low
  const int drop = static_cast<int>(std::floor(0.05 * static_cast<double>(all.size())));
  std::vector<DriftBucket> kept(all.begin(), all.end() - drop);
  const int n = static_cast<int>(kept.size());

  bool any_nonpositive = false;
  for (const auto& b : kept)
    if (b.raw <= 0.0) any_nonpositive = true;
  if (!any_nonpositive)
    throw std::runtime_error("intervention policy not observed stabilizing: "
                             "all drift estimates positive");

  // counts-weighted moving average centered on available neighbors
  for (int i = 0; i < n; ++i) {
    double wsum = 0, vsum = 0;
    for (int j = std::max(0, i - 5); j <= std::min(n - 1, i + 5); ++j) {
      wsum += static_cast<double>(kept[j].count);
      vsum += static_cast<double>(kept[j].count) * kept[j].raw;
    }
    kept[i].smoothed = vsum / wsum;
  }

  // counts-weighted 95th percentile over everything observed
  auto percentile95 = [&]() {
    long long cum = 0;
    for (const auto& b : all) {
      cum += b.count;
      if (static_cast<double>(cum) >= 0.95 * static_cast<double>(total_count))
        return static_cast<double>(b.qbar);
    }
    return static_cast<double>(all.back().qbar);
  };

  ThresholdEstimate est;
  est.table = kept;

  // threshold = min{q̄ : drift(q̄') < omega for every kept q̄' > q̄}, which is
  // the last bucket whose estimate has not yet dropped below omega. A series
  // that is below omega everywhere supports the smallest bucket; one that
  // never ends below omega supports no bucket at all and the percentile
  // stands in.
  auto crossing = [&](double DriftBucket::* field) -> double {
    int last_at_or_above = -1;
    for (int i = 0; i < n; ++i)
      if (kept[i].*field >= omega - kOmegaSlack) last_at_or_above = i;
    if (last_at_or_above < 0) return static_cast<double>(kept.front().qbar);
    if (last_at_or_above == n - 1) return -1.0;
    return static_cast<double>(kept[last_at_or_above].qbar);
  };

  est.point = crossing(&DriftBucket::raw);
  est.weighted = crossing(&DriftBucket::smoothed);
  if (est.weighted < 0) {
    est.weighted = percentile95();
    est.fallback = true;
  }
  if (est.point < 0) est.point = percentile95();
  return est;
}

}  // namespace detail

// Buckets the one-step Lyapunov drift by integer backlog and locates where
// the drift stops exceeding omega.
inline ThresholdEstimate estimate_threshold(const Trajectory& traj, double omega) {
  if (traj.length() == 0) throw std::invalid_argument("empty trajectory");
  std::map<long long, detail::BucketStat> buckets;
  for (int t = 0; t < traj.length(); ++t) {
    auto& st = buckets[traj.backlog[t]];
    st.count += 1;
    st.sum += traj.phi[t + 1] - traj.phi[t];
  }
  return detail::estimate_from_buckets(buckets, omega);
}

inline void dump_drift_csv(const ThresholdEstimate& est, std::ostream& os) {
  os << "q_bar,count,raw_drift,smoothed_drift\n";
  for (const auto& b : est.table)
    os << b.qbar << "," << b.count << "," << b.raw << "," << b.smoothed << "\n";
}

// Tracks convergence of the running time-average backlog over fixed windows.
class ConvergenceTracker {
 public:
  ConvergenceTracker(double tol = 0.01, long long window = 10000)
      : tol_(tol), window_(window) {}

  void feed(long long backlog) {
    if (converged_) {
      ++steps_;
      return;
    }
    sum_ += static_cast<double>(backlog);
    ++steps_;
    if (steps_ % window_ == 0) {
      const double avg = sum_ / static_cast<double>(steps_);
      if (have_prev_ &&
          std::abs(avg - prev_avg_) < tol_ * std::max(std::abs(prev_avg_), 1e-9))
        converged_ = true;
      prev_avg_ = avg;
      have_prev_ = true;
    }
  }

  bool converged() const { return converged_; }
  long long steps() const { return steps_; }

  // checkpoint plumbing
  double sum() const { return sum_; }
  double prev_avg() const { return prev_avg_; }
  bool have_prev() const { return have_prev_; }
  void restore(long long steps, double sum, double prev_avg, bool have_prev,
               bool converged) {
    steps_ = steps;
    sum_ = sum;
    prev_avg_ = prev_avg;
    have_prev_ = have_prev;
    converged_ = converged;
  }

 private:
  double tol_;
  long long window_;
  long long steps_ = 0;
  double sum_ = 0.0;
  double prev_avg_ = 0.0;
  bool have_prev_ = false;
  bool converged_ = false;
};

struct PilotResult {
  Trajectory traj;
  long long t0 = 0;
  bool converged = false;
};

// Rolls the intervention policy until its running time-average backlog
// settles (relative change below tol across consecutive 10,000-step windows)
// or max_steps is reached.
inline PilotResult run_pilot(Network& env, const BaselinePolicy& pi0,
                             long long max_steps, double tol,
                             RandomStream& policy_rng) {
  PilotResult res;
  ConvergenceTracker tracker(tol);
  while (tracker.steps() < max_steps && !tracker.converged()) {
    const auto& s = env.state();
    res.traj.backlog.push_back(total_backlog(s));
    res.traj.phi.push_back(lyapunov(s));
    res.traj.shaped.push_back(shape_cost(res.traj.backlog.back()));
    res.traj.intervened.push_back(1);
    res.traj.logp.push_back(0.0);
    tracker.feed(res.traj.backlog.back());
    env.step(pi0.act(s, env.config(), env.reach(), policy_rng));
  }
  res.traj.backlog.push_back(env.backlog());
  res.traj.phi.push_back(lyapunov(env.state()));
  res.t0 = res.traj.length();
  res.converged = tracker.converged();
  if (!res.converged)
    std::cerr << "warning: pilot did not converge within " << max_steps
              << " steps; using the full trajectory\n";
  return res;
}

}  // namespace sqn
