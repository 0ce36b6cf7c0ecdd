#include <cmath>
#include <cstdint>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "sqn/builtin.hpp"
#include "sqn/heads.hpp"

using namespace sqn;

namespace {

// all rows of length `cols` with nonnegative entries summing to `total`
void enumerate_rows(int cols, int total, std::vector<int>& row,
                    std::vector<std::vector<int>>& out) {
  if (static_cast<int>(row.size()) == cols - 1) {
    int used = 0;
    for (int v : row) used += v;
    row.push_back(total - used);
    out.push_back(row);
    row.pop_back();
    return;
  }
  int used = 0;
  for (int v : row) used += v;
  for (int v = 0; v + used <= total; ++v) {
    row.push_back(v);
    enumerate_rows(cols, total, row, out);
    row.pop_back();
  }
}

bool masked_ok(const std::vector<int>& row, const std::vector<std::uint8_t>& mask) {
  for (std::size_t i = 0; i < row.size(); ++i)
    if (row[i] > 0 && !mask[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("mask_logits replaces invalid entries") {
  auto ml = mask_logits({0.0, 0.0, 0.0}, {1, 1, 0});
  REQUIRE(ml == std::vector<double>{0.0, 0.0, kMaskLogit});
  auto p = masked_softmax({0.0, 0.0, 0.0}, {1, 1, 0});
  REQUIRE(p[0] == Catch::Approx(0.5));
  REQUIRE(p[1] == Catch::Approx(0.5));
  REQUIRE(p[2] == 0.0);

  REQUIRE_THROWS(mask_logits({1.0, 2.0}, {0, 0}));
  REQUIRE(mask_logits({1.0, 1.0}, {1, 1}) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("categorical head samples by inverse cdf") {
  REQUIRE(detail::sample_index({0.5, 0.5}, 0.25) == 0);
  REQUIRE(detail::sample_index({0.5, 0.5}, 0.75) == 1);
  REQUIRE(detail::sample_index({0.0, 1.0}, 0.0) == 1);

  MaskedCategorical two({0.0, 0.0}, {1, 1});
  REQUIRE(two.log_prob(0) == Catch::Approx(std::log(0.5)));

  MaskedCategorical only({5.0, -2.0}, {0, 1});
  RandomStream rng(1u);
  for (int i = 0; i < 50; ++i) {
    auto [idx, lp] = only.sample(rng);
    REQUIRE(idx == 1);
    REQUIRE(lp == 0.0);
  }
  REQUIRE_THROWS(only.log_prob(0));
}

TEST_CASE("categorical sampling frequencies match the softmax") {
  MaskedCategorical head({0.3, -0.2, 1.0}, {1, 1, 1});
  RandomStream rng(42u, StreamId::Policy);
  const int n = 1000000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) counts[head.sample(rng).first] += 1;
  for (int k = 0; k < 3; ++k) {
    const double p = head.probs[k];
    const double se = std::sqrt(p * (1 - p) / n);
    REQUIRE(std::abs(static_cast<double>(counts[k]) / n - p) <= 3 * se);
  }
}

TEST_CASE("categorical log-prob gradient matches finite differences") {
  std::vector<double> logits = {0.4, -1.1, 0.9, 0.0};
  std::vector<std::uint8_t> mask = {1, 0, 1, 1};
  MaskedCategorical head(logits, mask);
  const int action = 2;
  auto grad = head.grad_log_prob(action);
  REQUIRE(grad[1] == 0.0);

  const double h = 1e-7;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    auto lp = logits, lm = logits;
    lp[j] += h;
    lm[j] -= h;
    const double fd = (MaskedCategorical(lp, mask).log_prob(action) -
                       MaskedCategorical(lm, mask).log_prob(action)) /
                      (2 * h);
    REQUIRE(std::abs(grad[j] - fd) <= 1e-6 * std::max(1.0, std::abs(grad[j])));
  }
}

TEST_CASE("masking invariance: masked logits are inert") {
  std::vector<double> logits = {0.4, -1.1, 0.9};
  std::vector<std::uint8_t> mask = {1, 0, 1};
  MaskedCategorical a(logits, mask);
  auto bumped = logits;
  bumped[1] += 7.5;
  MaskedCategorical b(bumped, mask);
  REQUIRE(a.probs == b.probs);
  RandomStream r1(5u), r2(5u);
  for (int i = 0; i < 100; ++i) REQUIRE(a.sample(r1) == b.sample(r2));
  REQUIRE(a.grad_log_prob(2) == b.grad_log_prob(2));
}

TEST_CASE("multinomial rows sum to the trial count and respect masks") {
  LinkMultinomial zero({0.0, 0.0}, {1, 1}, 0);
  RandomStream rng(9u);
  REQUIRE(zero.sample_row(rng) == std::vector<int>{0, 0});
  REQUIRE(multinomial_log_prob(zero, {0, 0}) == 0.0);

  LinkMultinomial head({0.1, -0.3, 0.7}, {1, 1, 0}, 3);
  for (int i = 0; i < 100000; ++i) {
    auto row = head.sample_row(rng);
    REQUIRE(row[0] + row[1] + row[2] == 3);
    REQUIRE(row[2] == 0);
  }
}

TEST_CASE("multinomial log-prob closed forms") {
  // two columns, even split: P(1,1) = C(2;1,1) * 0.25 = 0.5
  LinkMultinomial even({0.0, 0.0}, {1, 1}, 2);
  REQUIRE(multinomial_log_prob(even, {1, 1}) == Catch::Approx(-std::log(2.0)));

  RandomStream rng(31u);
  int split = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    if (even.sample_row(rng) == std::vector<int>{1, 1}) ++split;
  REQUIRE(std::abs(split / static_cast<double>(n) - 0.5) <= 3 * std::sqrt(0.25 / n));

  // certain outcome
  LinkMultinomial sure({0.0, 0.0, 0.0}, {1, 0, 0}, 4);
  REQUIRE(multinomial_log_prob(sure, {4, 0, 0}) == Catch::Approx(0.0).margin(1e-12));

  // bad rows
  REQUIRE_THROWS(multinomial_log_prob(even, {2, 1}));
  REQUIRE_THROWS(multinomial_log_prob(even, {-1, 3}));
  REQUIRE_THROWS(multinomial_log_prob(sure, {3, 1, 0}));
}

TEST_CASE("multinomial pmf sums to one by enumeration") {
  RandomStream rng(55u);
  for (int K = 1; K <= 3; ++K) {
    for (int y = 0; y <= 4; ++y) {
      std::vector<double> logits(K + 1);
      for (auto& v : logits) v = rng.normal();
      std::vector<std::uint8_t> mask(K + 1, 1);
      if (K == 3) mask[2] = 0;  // exercise a masked class
      LinkMultinomial head(logits, mask, y);

      std::vector<std::vector<int>> rows;
      std::vector<int> scratch;
      enumerate_rows(K + 1, y, scratch, rows);
      double total = 0;
      for (const auto& row : rows) {
        if (!masked_ok(row, mask)) continue;
        total += std::exp(multinomial_log_prob(head, row));
      }
      REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("multinomial log-prob gradient matches finite differences") {
  std::vector<double> logits = {0.2, -0.5, 0.8, 0.1};
  std::vector<std::uint8_t> mask = {1, 1, 0, 1};
  std::vector<int> row = {1, 2, 0, 1};
  LinkMultinomial head(logits, mask, 4);
  auto grad = multinomial_grad_log_prob(head, row);
  REQUIRE(grad[2] == 0.0);

  const double h = 1e-7;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    auto lp = logits, lm = logits;
    lp[j] += h;
    lm[j] -= h;
    const double fd = (multinomial_log_prob(LinkMultinomial(lp, mask, 4), row) -
                       multinomial_log_prob(LinkMultinomial(lm, mask, 4), row)) /
                      (2 * h);
    REQUIRE(std::abs(grad[j] - fd) <= 1e-6 * std::max(1.0, std::abs(grad[j])));
  }
}

TEST_CASE("state encoding is symlog of q then y") {
  NetworkState s;
  s.q = {1, 0};
  s.y = {1, 2};
  auto x = encode_state(s);
  REQUIRE(x.size() == 4);
  REQUIRE(x[0] == Catch::Approx(std::log(2.0)));
  REQUIRE(x[1] == 0.0);
  REQUIRE(x[2] == Catch::Approx(std::log(2.0)));
  REQUIRE(x[3] == Catch::Approx(std::log(3.0)));
}

TEST_CASE("zero-weight actor spreads probability uniformly") {
  auto cfg = builtin_config("sh1");
  auto actor = Mlp::make(actor_input_dim(cfg), {64, 64}, actor_output_dim(cfg));
  NetworkState s;
  s.q = {1, 1};
  s.y = {1, 1};
  auto head = single_hop_head(forward(actor, encode_state(s)), s);
  REQUIRE(head.probs[0] == Catch::Approx(0.5));
  REQUIRE(head.probs[1] == Catch::Approx(0.5));
  REQUIRE(head.probs[2] == 0.0);  // idle masked while work is available

  auto mh = builtin_config("mh1");
  auto reach = reachability_mask(mh);
  auto mactor = Mlp::make(actor_input_dim(mh), {64, 64}, actor_output_dim(mh));
  NetworkState ms;
  ms.q.assign(mh.queue_rows(), 2);
  ms.y = {1, 1, 1, 1, 1, 1};
  auto heads = multi_hop_heads(forward(mactor, encode_state(ms)), ms, mh, reach);
  REQUIRE(heads.size() == 6);
  for (const auto& h : heads)
    for (double p : h.probs) REQUIRE(p == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("sampled log-prob agrees with recomputation") {
  for (const char* name : {"sh2", "mh1"}) {
    auto cfg = builtin_config(name);
    auto reach = cfg.kind == TaskKind::MultiHop ? reachability_mask(cfg)
                                                : std::vector<std::uint8_t>{};
    RandomStream init(3u, StreamId::Init);
    auto actor = Mlp::make(actor_input_dim(cfg), {64, 64}, actor_output_dim(cfg));
    init_orthogonal(actor, init, std::sqrt(2.0), 0.01);

    Network env(cfg, 12u);
    RandomStream pol(12u, StreamId::Policy);
    for (int t = 0; t < 300; ++t) {
      double lp_sampled = 0;
      auto a = sample_policy_action(actor, env.state(), cfg, reach, pol, &lp_sampled);
      Activations acts;
      std::vector<double> dlogits;
      const double lp_re = policy_log_prob_and_grad(actor, env.state(), cfg, reach,
                                                    a, acts, dlogits);
      REQUIRE(lp_re == Catch::Approx(lp_sampled).margin(1e-12));
      REQUIRE(dlogits.size() == static_cast<std::size_t>(actor_output_dim(cfg)));
      env.step(a);
    }
  }
}

TEST_CASE("actor-sampled multi-hop actions are always valid") {
  auto cfg = builtin_config("mh1");
  auto reach = reachability_mask(cfg);
  RandomStream init(8u, StreamId::Init);
  auto actor = Mlp::make(actor_input_dim(cfg), {64, 64}, actor_output_dim(cfg));
  init_orthogonal(actor, init, std::sqrt(2.0), 0.01);

  Network env(cfg, 21u);
  RandomStream pol(21u, StreamId::Policy);
  for (int t = 0; t < 3000; ++t) {
    auto a = sample_policy_action(actor, env.state(), cfg, reach, pol, nullptr);
    const int cols = cfg.num_classes() + 1;
    for (int m = 0; m < cfg.num_links(); ++m) {
      int sum = 0;
      for (int c = 0; c < cols; ++c) sum += a.alloc[m * cols + c];
      REQUIRE(sum == env.state().y[m]);
    }
    REQUIRE_NOTHROW(env.step(a));
  }
}
