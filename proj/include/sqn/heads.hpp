#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sqn/env.hpp"
#include "sqn/mlp.hpp"

namespace sqn {

constexpr double kMaskLogit = -1e9;

inline std::vector<double> mask_logits(std::vector<double> logits,
                                       const std::vector<std::uint8_t>& mask) {
  if (logits.size() != mask.size())
    throw std::invalid_argument("mask_logits: length mismatch");
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i])
      any = true;
    else
      logits[i] = kMaskLogit;
  }
  if (!any) throw std::invalid_argument("mask_logits: no valid action");
  return logits;
}

// softmax over masked logits; masked entries underflow to exactly zero
inline std::vector<double> masked_softmax(const std::vector<double>& logits,
                                          const std::vector<std::uint8_t>& mask) {
  auto ml = mask_logits(logits, mask);
  double mx = ml[0];
  for (double v : ml) mx = std::max(mx, v);
  double sum = 0;
  std::vector<double> p(ml.size());
  for (std::size_t i = 0; i < ml.size(); ++i) {
    p[i] = std::exp(ml[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

namespace detail {

// inverse-CDF over a probability vector; zero entries can never be picked
inline int sample_index(const std::vector<double>& probs, double u) {
  double cum = 0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  if (last_positive < 0) throw std::logic_error("sample_index: no positive probability");
  return last_positive;
}

}  // namespace detail

struct MaskedCategorical {
  std::vector<double> logits;
  std::vector<std::uint8_t> mask;
  std::vector<double> probs;  // filled at construction

  MaskedCategorical(std::vector<double> l, std::vector<std::uint8_t> m)
      : logits(std::move(l)), mask(std::move(m)) {
    probs = masked_softmax(logits, mask);
  }

  double log_prob(int index) const {
    if (index < 0 || index >= static_cast<int>(probs.size()) || !mask[index])
      throw std::invalid_argument("log_prob of an invalid action");
    return std::log(probs[index]);
  }

  std::pair<int, double> sample(RandomStream& rng) const {
    const int idx = detail::sample_index(probs, rng.uniform());
    return {idx, std::log(probs[idx])};
  }

  // d log p(index) / d logits; masked entries get exactly zero
  std::vector<double> grad_log_prob(int index) const {
    std::vector<double> g(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j)
      g[j] = (static_cast<int>(j) == index ? 1.0 : 0.0) - probs[j];
    return g;
  }
};

struct LinkMultinomial {
  std::vector<double> logits;           // K+1, column 0 = unused capacity
  std::vector<std::uint8_t> class_mask; // column 0 always allowed
  int trials = 0;                       // current y_m
  std::vector<double> probs;

  LinkMultinomial(std::vector<double> l, std::vector<std::uint8_t> m, int y)
      : logits(std::move(l)), class_mask(std::move(m)), trials(y) {
    if (!class_mask.empty() && !class_mask[0])
      throw std::invalid_argument("unused-capacity column must stay unmasked");
    probs = masked_softmax(logits, class_mask);
  }

  std::vector<int> sample_row(RandomStream& rng) const {
    std::vector<int> row(probs.size(), 0);
    for (int t = 0; t < trials; ++t)
      row[detail::sample_index(probs, rng.uniform())] += 1;
    return row;
  }
};

// counts-form log-likelihood: sum_k A_k ln p_k + ln G(trials+1) - sum_k ln G(A_k+1)
inline double multinomial_log_prob(const LinkMultinomial& head,
                                   const std::vector<int>& row) {
  if (row.size() != head.probs.size())
    throw std::invalid_argument("multinomial_log_prob: row width mismatch");
  long long total = 0;
  double lp = 0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] < 0) throw std::invalid_argument("negative allocation count");
    if (row[k] == 0) continue;
    total += row[k];
    if (head.probs[k] <= 0.0)
      throw std::domain_error("allocation to a zero-probability class");
    lp += row[k] * std::log(head.probs[k]) - std::lgamma(row[k] + 1.0);
  }
  if (total != head.trials)
    throw std::invalid_argument("allocation row does not sum to the trial count");
  lp += std::lgamma(head.trials + 1.0);
  return lp;
}

// d log p(row) / d logits = A - (sum A) p; masked entries get exactly zero
inline std::vector<double> multinomial_grad_log_prob(const LinkMultinomial& head,
                                                     const std::vector<int>& row) {
  std::vector<double> g(head.probs.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    g[k] = row[k] - head.trials * head.probs[k];
  return g;
}

inline std::pair<Action, double> multinomial_sample(
    const std::vector<LinkMultinomial>& heads, RandomStream& rng) {
  Action a;
  double lp = 0;
  for (const auto& h : heads) {
    auto row = h.sample_row(rng);
    lp += multinomial_log_prob(h, row);
    a.alloc.insert(a.alloc.end(), row.begin(), row.end());
  }
  a.link = 0;
  return {a, lp};
}

// symlog of flattened q followed by y
inline std::vector<double> encode_state(const NetworkState& s) {
  std::vector<double> x;
  x.reserve(s.q.size() + s.y.size());
  for (long long v : s.q) x.push_back(symlog(static_cast<double>(v)));
  for (int v : s.y) x.push_back(symlog(static_cast<double>(v)));
  return x;
}

inline int actor_input_dim(const NetworkConfig& cfg) {
  return cfg.queue_rows() + cfg.num_links();
}

inline int actor_output_dim(const NetworkConfig& cfg) {
  if (cfg.kind == TaskKind::SingleHop) return cfg.num_classes() + 1;
  return cfg.num_links() * (cfg.num_classes() + 1);
}

inline MaskedCategorical single_hop_head(const std::vector<double>& logits,
                                         const NetworkState& s) {
  return MaskedCategorical(logits, work_conserving_mask(s));
}

inline std::vector<LinkMultinomial> multi_hop_heads(
    const std::vector<double>& logits, const NetworkState& s,
    const NetworkConfig& cfg, const std::vector<std::uint8_t>& reach) {
  const int K = cfg.num_classes();
  const int M = cfg.num_links();
  const std::size_t cols = static_cast<std::size_t>(K) + 1;
  if (logits.size() != cols * M)
    throw std::invalid_argument("multi-hop logits must be M x (K+1)");
  std::vector<LinkMultinomial> heads;
  heads.reserve(M);
  for (int m = 0; m < M; ++m) {
    std::vector<double> block(logits.begin() + m * cols,
                              logits.begin() + (m + 1) * cols);
    std::vector<std::uint8_t> cm(cols, 0);
    cm[0] = 1;
    for (int k = 1; k <= K; ++k) cm[k] = reach[static_cast<std::size_t>(m) * K + k - 1];
    heads.emplace_back(std::move(block), std::move(cm), s.y[m]);
  }
  return heads;
}

// One policy evaluation: sample an action and report its log-probability.
inline Action sample_policy_action(const Mlp& actor, const NetworkState& s,
                                   const NetworkConfig& cfg,
                                   const std::vector<std::uint8_t>& reach,
                                   RandomStream& rng, double* logp) {
  const auto logits = forward(actor, encode_state(s));
  if (cfg.kind == TaskKind::SingleHop) {
    auto head = single_hop_head(logits, s);
    auto [idx, lp] = head.sample(rng);
    if (logp) *logp = lp;
    return idx == cfg.num_classes() ? Action::idle() : Action::pick_link(idx + 1);
  }
  auto heads = multi_hop_heads(logits, s, cfg, reach);
  auto [a, lp] = multinomial_sample(heads, rng);
  if (logp) *logp = lp;
  return a;
}

// Recomputes log pi(action | state) under the current actor and the gradient
// of that log-probability w.r.t. the raw logits. Returns the log-prob;
// activations are cached for a subsequent backward pass.
inline double policy_log_prob_and_grad(const Mlp& actor, const NetworkState& s,
                                       const NetworkConfig& cfg,
                                       const std::vector<std::uint8_t>& reach,
                                       const Action& a, Activations& acts,
                                       std::vector<double>& dlogits) {
  const auto& logits = forward_cached(actor, encode_state(s), acts);
  if (cfg.kind == TaskKind::SingleHop) {
    auto head = single_hop_head(logits, s);
    const int idx = a.link == 0 ? cfg.num_classes() : a.link - 1;
    dlogits = head.grad_log_prob(idx);
    return head.log_prob(idx);
  }
  auto heads = multi_hop_heads(logits, s, cfg, reach);
  const std::size_t cols = static_cast<std::size_t>(cfg.num_classes()) + 1;
  dlogits.assign(logits.size(), 0.0);
  double lp = 0;
  for (std::size_t m = 0; m < heads.size(); ++m) {
    std::vector<int> row(a.alloc.begin() + m * cols, a.alloc.begin() + (m + 1) * cols);
    lp += multinomial_log_prob(heads[m], row);
    auto g = multinomial_grad_log_prob(heads[m], row);
    std::copy(g.begin(), g.end(), dlogits.begin() + m * cols);
  }
  return lp;
}

}  // namespace sqn
