#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wcmtl/rng.hpp"
#include "wcmtl/types.hpp"

namespace wcmtl {

// Bandit over tasks: EXP3-style multiplicative weights with a fixed-share
// uniform component mixed into the policy (not into the weights).

struct SamplerState {
  std::vector<double> weights;  // w_i > 0
  double gamma = 0.001;         // exploration share in [0, 1]

  std::size_t n_tasks() const { return weights.size(); }
};

struct PolicyVector {
  std::vector<double> probs;
};

/// One optional reward per arm; arms not pulled this round have none.
struct RewardVector {
  std::vector<std::optional<double>> rewards;
};

SamplerState init_sampler(std::size_t n_tasks, double gamma);

/// pi_i = (1 - gamma) w_i / sum_j w_j + gamma / n
PolicyVector policy(const SamplerState& state);

TaskId sample_arm(const PolicyVector& policy, Rng& rng);

/// Elementwise after - before. Callers pass `after` with this round's refill
/// pushes already subtracted.
std::vector<long> delta_counts(std::span<const long> before, std::span<const long> after);

/// Queue-growth rewards normalized by the largest growth. `selected` marks
/// arms pulled at least once this round. An all-zero delta vector gives zero
/// rewards for every selected arm.
RewardVector compute_rewards(std::span<const long> deltas, const std::vector<bool>& selected,
                             TaskId chosen);

/// w_i <- w_i * exp(gamma / n * r_i / pi_i) for every arm with a reward.
/// Throws NumericFault if a weight leaves (0, inf).
SamplerState update_weights(SamplerState state, const RewardVector& rewards,
                            const PolicyVector& policy);

SamplerState reset_weights_epoch(SamplerState state);

}  // namespace wcmtl
