#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "wcmtl/errors.hpp"
#include "wcmtl/rng.hpp"
#include "wcmtl/sampler.hpp"

using namespace wcmtl;

TEST_CASE("init_sampler") {
  const auto s = init_sampler(8, 0.001);
  CHECK(s.weights == std::vector<double>(8, 1.0));
  for (double p : policy(s).probs) CHECK(p == doctest::Approx(0.125).epsilon(1e-15));

  CHECK(policy(init_sampler(1, 0.0)).probs == std::vector<double>{1.0});

  CHECK_THROWS_AS(init_sampler(0, 0.001), std::invalid_argument);
  CHECK_THROWS_AS(init_sampler(3, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(init_sampler(3, 1.5), std::invalid_argument);
}

TEST_CASE("policy examples") {
  auto p = policy(SamplerState{{1.0, 3.0}, 0.0}).probs;
  CHECK(p[0] == 0.25);
  CHECK(p[1] == 0.75);

  p = policy(SamplerState{{5.0, 7.0, 11.0}, 1.0}).probs;
  for (double x : p) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("policy floor and normalization on random states") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto round = oracle::random_round(rng);
    const auto p = policy(round.state).probs;
    const double n = static_cast<double>(p.size());
    double sum = 0.0;
    for (double x : p) {
      CHECK(x >= round.state.gamma / n - 1e-15);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("sample_arm") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) CHECK(sample_arm(PolicyVector{{1.0, 0.0, 0.0}}, rng) == 0);

  // Binomial 3 sigma band around 0.75 for 1e5 draws is +-0.0041.
  Rng draws(2024, streams::kSampler);
  const PolicyVector two{{0.25, 0.75}};
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += sample_arm(two, draws) == 1;
  CHECK(ones / 1e5 >= 0.745);
  CHECK(ones / 1e5 <= 0.755);

  const auto uniform = policy(init_sampler(8, 0.001));
  Rng a(9, streams::kSampler), b(9, streams::kSampler);
  for (int i = 0; i < 1000; ++i) CHECK(sample_arm(uniform, a) == sample_arm(uniform, b));
}

TEST_CASE("delta_counts") {
  using V = std::vector<long>;
  CHECK(delta_counts(V{0, 0, 0}, V{2, 0, 3}) == V{2, 0, 3});
  CHECK(delta_counts(V{50, 1}, V{50, 4}) == V{0, 3});
  CHECK(delta_counts(V{7, 2}, V{7, 2}) == V{0, 0});
  CHECK_THROWS_AS(delta_counts(V{1}, V{1, 2}), std::invalid_argument);
}

TEST_CASE("compute_rewards examples") {
  auto r = compute_rewards(std::vector<long>{2, 0, 3}, {true, false, true}, 2).rewards;
  REQUIRE(r[0]);
  CHECK(*r[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(r[1]);
  CHECK(*r[2] == 1.0);

  r = compute_rewards(std::vector<long>{0, 0, 0}, {true, true, false}, 0).rewards;
  CHECK(*r[0] == 0.0);
  CHECK(*r[1] == 0.0);
  CHECK_FALSE(r[2]);

  r = compute_rewards(std::vector<long>{4}, {true}, 0).rewards;
  CHECK(*r[0] == 1.0);
}

TEST_CASE("reward bounds") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    auto round = oracle::random_round(rng);
    const auto r = compute_rewards(round.deltas, round.selected, round.chosen).rewards;
    const long max_delta = *std::max_element(round.deltas.begin(), round.deltas.end());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i].has_value() == static_cast<bool>(round.selected[i]));
      if (!r[i]) continue;
      CHECK(*r[i] >= -1.0);
      CHECK(*r[i] <= 1.0);
      if (i == round.chosen) {
        CHECK(*r[i] >= 0.0);
        CHECK((*r[i] == 1.0) == (max_delta > 0 && round.deltas[i] == max_delta));
      } else {
        CHECK(*r[i] <= 0.0);
      }
    }
  }
}

TEST_CASE("update_weights examples") {
  const auto s = init_sampler(8, 0.001);
  const auto p = policy(s);

  RewardVector r;
  r.rewards.resize(8);
  CHECK(update_weights(s, r, p).weights == s.weights);

  r.rewards[3] = 0.0;
  CHECK(update_weights(s, r, p).weights == s.weights);

  r.rewards[3] = 1.0;
  const auto updated = update_weights(s, r, p);
  CHECK(oracle::rel_error(updated.weights[3], exp(oracle::Big("0.001"))) <= 1e-15);
  for (std::size_t i = 0; i < 8; ++i)
    if (i != 3) CHECK(updated.weights[i] == 1.0);
}

TEST_CASE("update_weights rejects overflow") {
  SamplerState s{{1e300, 1.0}, 1.0};
  PolicyVector p{{1e-6, 1.0 - 1e-6}};
  RewardVector r{{1.0, std::nullopt}};
  CHECK_THROWS_AS(update_weights(s, r, p), NumericFault);
}

TEST_CASE("equations agree with the 50-digit oracle") {
  Rng rng(23);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto round = oracle::random_round(rng);
    const auto p = policy(round.state);
    const auto r = compute_rewards(round.deltas, round.selected, round.chosen);
    const auto w = update_weights(round.state, r, p).weights;

    const auto p_ref = oracle::policy(round.state.weights, round.state.gamma);
    const auto r_ref = oracle::rewards(round.deltas, round.selected, round.chosen);
    const auto w_ref = oracle::updated_weights(round.state.weights, round.state.gamma, r_ref, p_ref);
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
      worst = std::max(worst, oracle::rel_error(p.probs[i], p_ref[i]));
      REQUIRE(r.rewards[i].has_value() == r_ref[i].has_value());
      if (r_ref[i]) worst = std::max(worst, oracle::rel_error(*r.rewards[i], *r_ref[i]));
      worst = std::max(worst, oracle::rel_error(w[i], w_ref[i]));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("reset_weights_epoch") {
  CHECK(reset_weights_epoch(SamplerState{{0.3, 7.2}, 0.1}).weights == std::vector<double>{1, 1});
  CHECK(reset_weights_epoch(SamplerState{{1, 1}, 0.1}).weights == std::vector<double>{1, 1});
  SamplerState s{{0.5, 2, 3, 9, 0.1, 4, 4, 1}, 0.3};
  for (double p : policy(reset_weights_epoch(s)).probs) CHECK(p == doctest::Approx(0.125));
}

TEST_CASE("permuting tasks permutes every output") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto round = oracle::random_round(rng);
    const std::size_t n = round.state.n_tasks();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    SamplerState ps{std::vector<double>(n), round.state.gamma};
    std::vector<long> pd(n);
    std::vector<bool> psel(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps.weights[perm[i]] = round.state.weights[i];
      pd[perm[i]] = round.deltas[i];
      psel[perm[i]] = round.selected[i];
    }

    const auto p = policy(round.state);
    const auto pp = policy(ps);
    const auto w = update_weights(round.state, compute_rewards(round.deltas, round.selected, round.chosen), p);
    const auto pw = update_weights(ps, compute_rewards(pd, psel, perm[round.chosen]), pp);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pp.probs[perm[i]] == doctest::Approx(p.probs[i]).epsilon(1e-14));
      CHECK(pw.weights[perm[i]] == doctest::Approx(w.weights[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("weight trajectories are reproducible") {
  auto trajectory = [](std::uint64_t seed) {
    Rng arms(seed, streams::kSampler);
    Rng deltas(seed, streams::kData);
    auto s = init_sampler(6, 0.2);
    std::vector<double> out;
    for (int round = 0; round < 300; ++round) {
      const auto p = policy(s);
      std::vector<bool> selected(6, false);
      std::vector<long> d(6, 0);
      for (int a = 0; a < 12; ++a) {
        const auto i = sample_arm(p, arms);
        selected[i] = true;
        d[i] += static_cast<long>(deltas.below(3));
      }
      s = update_weights(s, compute_rewards(d, selected, deltas.below(6)), p);
      out.insert(out.end(), s.weights.begin(), s.weights.end());
    }
    return out;
  };
  CHECK(trajectory(3) == trajectory(3));
  CHECK(trajectory(3) != trajectory(4));
}
