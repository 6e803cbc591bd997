#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "demask/error.hpp"
#include "demask/policy.hpp"
#include "demask/rng.hpp"

using namespace demask;

namespace {

PositionBelief belief_at(std::size_t j, double entropy, double logp) {
  PositionBelief b;
  b.position = j;
  b.entropy = entropy;
  b.greedy_logp = logp;
  return b;
}

Features random_features(std::size_t slots, std::size_t dim, Rng& rng) {
  Features f(slots, dim);
  for (double& x : f.data) x = 2.0 * rng.uniform() - 1.0;
  return f;
}

struct Episode {
  PolicyParams policy;
  ValueParams value;
  std::vector<StepTape> tape;
  std::vector<double> advantages;
  std::vector<double> returns;
};

// T steps over a T-slot canvas; each step removes the chosen slot.
Episode random_episode(std::size_t f, std::size_t h, std::size_t t, Rng& rng) {
  Episode ep;
  ep.policy.net = Mlp::random(f, h, rng.next(), 0.5);
  ep.value.net = Mlp::random(f, h, rng.next(), 0.5);
  std::vector<std::size_t> masked(t);
  for (std::size_t j = 0; j < t; ++j) masked[j] = j;
  for (std::size_t i = 0; i < t; ++i) {
    StepTape st;
    st.features = random_features(t, f, rng);
    st.masked = masked;
    st.chosen = masked[rng.below(masked.size())];
    masked.erase(std::find(masked.begin(), masked.end(), st.chosen));
    ep.tape.push_back(std::move(st));
    ep.advantages.push_back(2.0 * rng.uniform() - 1.0);
    ep.returns.push_back(rng.uniform());
  }
  return ep;
}

double total_loss(const Episode& ep, const LossWeights& w) {
  return episode_losses(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, w).total;
}

// Worst per-parameter relative error between analytic and central differences.
double worst_relative_error(Episode& ep, const LossWeights& w) {
  Gradients g(ep.policy, ep.value);
  episode_backward(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, w, g);
  const double h = 1e-5;
  double worst = 0.0;
  auto sweep = [&](std::vector<double>& theta, const std::vector<double>& analytic) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = theta[k];
      theta[k] = saved + h;
      const double up = total_loss(ep, w);
      theta[k] = saved - h;
      const double down = total_loss(ep, w);
      theta[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic[k]) / denom);
    }
  };
  sweep(ep.policy.net.params(), g.policy);
  sweep(ep.value.net.params(), g.value);
  return worst;
}

}  // namespace

TEST_CASE("feature rows on a hand canvas") {
  Canvas c(Tokens{2, 3, 4, 5}, 4);
  c.fill(1, 3);
  const std::vector<PositionBelief> beliefs = {belief_at(0, 0.5, std::log(0.7)),
                                               belief_at(2, std::log(4.0), std::log(0.25)),
                                               belief_at(3, 0.0, 0.0)};
  const Features f = extract_features(c, beliefs, 4);
  REQUIRE(f.slots == 4);
  REQUIRE(f.dim == kFeatureDim);

  const std::vector<double> row2 = {1.0, 0.5, 0.5, 0.25, 1.0, 0.25, 0.25, 1.0, 0.0, 0.25};
  for (std::size_t k = 0; k < kFeatureDim; ++k) CHECK(f.row(2)[k] == doctest::Approx(row2[k]));

  const std::vector<double> row1 = {0.0, 0.25, 0.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.25};
  for (std::size_t k = 0; k < kFeatureDim; ++k) CHECK(f.row(1)[k] == doctest::Approx(row1[k]));

  CHECK(f.row(0)[4] == doctest::Approx(0.5 / std::log(4.0)));
  CHECK(f.row(0)[5] == doctest::Approx(0.7));
  CHECK(f.row(3)[3] == 0.0);

  CHECK_THROWS_AS(extract_features(c, {beliefs[0]}, 4), ArgumentError);
}

TEST_CASE("policy forward") {
  Canvas c(Tokens(5, 2), 5);
  c.fill(1, 2);
  std::vector<PositionBelief> beliefs;
  for (std::size_t j : c.masked_positions()) beliefs.push_back(belief_at(j, 1.0, -1.0));
  const Features f = extract_features(c, beliefs, 8);

  SUBCASE("zero parameters give the uniform distribution over masks") {
    PolicyParams p{Mlp(kFeatureDim, 4)};
    const auto d = policy_forward(p, f, c.masked_positions());
    for (std::size_t j : c.masked_positions()) CHECK(d.prob[j] == doctest::Approx(0.25));
    CHECK(d.prob[1] == 0.0);
    CHECK(d.argmax() == 0);
    CHECK(d.entropy() == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("a single masked slot has probability 1") {
    PolicyParams p{Mlp::random(kFeatureDim, 4, 3)};
    const auto d = policy_forward(p, f, {3});
    CHECK(d.prob[3] == 1.0);
    CHECK(d.entropy() == 0.0);
  }
  SUBCASE("hand two-slot case") {
    // one hidden unit reading the relative position feature
    PolicyParams p{Mlp(kFeatureDim, 1)};
    p.net.params()[1] = 1.0;             // W1[0][1]
    p.net.params()[kFeatureDim + 1] = 1.0;  // w2[0]
    const auto d = policy_forward(p, f, {0, 2});
    const double z2 = std::tanh(2.0 / 5.0);
    CHECK(d.prob[2] == doctest::Approx(1.0 / (1.0 + std::exp(-z2))).epsilon(1e-12));
    CHECK(d.prob[0] + d.prob[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.argmax() == 2);
  }
  SUBCASE("empty mask set is a state error") {
    PolicyParams p{Mlp(kFeatureDim, 2)};
    CHECK_THROWS_AS(policy_forward(p, f, {}), StateError);
  }
}

TEST_CASE("random policies put all mass on masked slots") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = 1 + rng.below(12);
    const Features f = random_features(t, kFeatureDim, rng);
    std::vector<std::size_t> masked;
    for (std::size_t j = 0; j < t; ++j) {
      if (rng.uniform() < 0.6) masked.push_back(j);
    }
    if (masked.empty()) masked.push_back(rng.below(t));
    PolicyParams p{Mlp::random(kFeatureDim, 8, rng.next(), 3.0)};
    const auto d = policy_forward(p, f, masked);
    double sum = 0.0;
    for (double x : d.prob) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (std::size_t j = 0; j < t; ++j) {
      if (std::find(masked.begin(), masked.end(), j) == masked.end()) CHECK(d.prob[j] == 0.0);
    }
  }
}

TEST_CASE("value head reads the mean feature row") {
  Rng rng(2);
  ValueParams v{Mlp::random(kFeatureDim, 6, 9, 0.5)};
  Features f = random_features(6, kFeatureDim, rng);
  const double before = value_forward(v, f);
  CHECK(before == doctest::Approx(v.net.forward(f.mean_row())));

  Features shuffled(6, kFeatureDim);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  for (std::size_t j = 0; j < 6; ++j) {
    std::copy(f.row(perm[j]).begin(), f.row(perm[j]).end(), shuffled.row(j).begin());
  }
  CHECK(value_forward(v, shuffled) == doctest::Approx(before).epsilon(1e-14));

  ValueParams zero{Mlp(kFeatureDim, 6)};
  CHECK(value_forward(zero, f) == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(1234);
  const LossWeights terms[] = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  double worst = 0.0;
  for (int config = 0; config < 100; ++config) {
    const std::size_t f = 1 + rng.below(12);
    const std::size_t h = 1 + rng.below(16);
    const std::size_t t = 1 + rng.below(8);
    Episode ep = random_episode(f, h, t, rng);
    for (const auto& w : terms) {
      const double err = worst_relative_error(ep, w);
      CAPTURE(f);
      CAPTURE(h);
      CAPTURE(t);
      CHECK(err <= 1e-4);
      worst = std::max(worst, err);
    }
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("each loss term only touches its own network") {
  Rng rng(8);
  Episode ep = random_episode(kFeatureDim, 5, 4, rng);
  Gradients g(ep.policy, ep.value);
  episode_backward(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, {1.0, 1.0, 0.0}, g);
  for (double x : g.value) CHECK(x == 0.0);
  Gradients gv(ep.policy, ep.value);
  episode_backward(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, {0.0, 0.0, 1.0}, gv);
  for (double x : gv.policy) CHECK(x == 0.0);
}

TEST_CASE("entropy term for uniform and one-hot steps") {
  // zero policy: uniform over the masks at every step
  Episode ep;
  ep.policy.net = Mlp(3, 2);
  ep.value.net = Mlp(3, 2);
  std::vector<std::size_t> masked = {0, 1, 2, 3};
  for (int i = 0; i < 4; ++i) {
    StepTape st;
    st.features = Features(4, 3);
    st.masked = {0, 1, 2, 3};
    st.chosen = 0;
    ep.tape.push_back(st);
    ep.advantages.push_back(0.0);
    ep.returns.push_back(0.0);
  }
  const auto l = episode_losses(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, {});
  CHECK(std::abs(l.entropy - std::log(4.0) / 4.0) <= 1e-12);

  for (auto& st : ep.tape) st.masked = {st.chosen};
  const auto one = episode_losses(ep.policy, ep.value, ep.tape, ep.advantages, ep.returns, {});
  CHECK(one.entropy == 0.0);
}

TEST_CASE("adam first step has the closed form lr * g / (|g| + eps)") {
  std::vector<double> theta = {1.0, -2.0, 0.5, 0.0};
  const std::vector<double> g = {0.3, -4.0, 1e-3, 0.0};
  AdamState s(theta.size(), 1e-2, 0.9, 0.98);
  adam_step(theta, g, s);
  const std::vector<double> start = {1.0, -2.0, 0.5, 0.0};
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double expected = start[k] - 1e-2 * g[k] / (std::abs(g[k]) + 1e-8);
    CHECK(theta[k] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(s.step == 1);
  CHECK(s.m[1] == doctest::Approx(0.1 * -4.0));
  CHECK(s.v[1] == doctest::Approx(0.02 * 16.0));
  CHECK(AdamState::from_json(s.to_json()) == s);
}

TEST_CASE("mlp serialization round-trips") {
  const Mlp m = Mlp::random(4, 3, 77);
  CHECK(Mlp::from_json(m.to_json()) == m);
  CHECK(m.num_params() == 3 * 4 + 3 + 3 + 1);
  CHECK_THROWS_AS(Mlp(0, 3), ConfigError);
}
