#include "wcmtl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "wcmtl/errors.hpp"

namespace wcmtl {

SamplerState init_sampler(std::size_t n_tasks, double gamma) {
  if (n_tasks == 0) throw std::invalid_argument("init_sampler: need at least one task");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("init_sampler: gamma must lie in [0, 1]");
  return SamplerState{std::vector<double>(n_tasks, 1.0), gamma};
}

PolicyVector policy(const SamplerState& state) {
  const auto n = static_cast<double>(state.n_tasks());
  const double total = std::accumulate(state.weights.begin(), state.weights.end(), 0.0);
  PolicyVector out;
  out.probs.reserve(state.n_tasks());
  for (double w : state.weights) out.probs.push_back((1.0 - state.gamma) * (w / total) + state.gamma / n);
  return out;
}

TaskId sample_arm(const PolicyVector& policy, Rng& rng) {
  return rng.categorical(policy.probs);
}

std::vector<long> delta_counts(std::span<const long> before, std::span<const long> after) {
  if (before.size() != after.size())
    throw std::invalid_argument("delta_counts: length mismatch");
  std::vector<long> out(before.size());
  std::transform(after.begin(), after.end(), before.begin(), out.begin(), std::minus<>{});
  return out;
}

RewardVector compute_rewards(std::span<const long> deltas, const std::vector<bool>& selected,
                             TaskId chosen) {
  if (selected.size() != deltas.size())
    throw std::invalid_argument("compute_rewards: selected mask length mismatch");
  const long max_delta = deltas.empty() ? 0 : *std::max_element(deltas.begin(), deltas.end());

  RewardVector out;
  out.rewards.resize(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!selected[i]) continue;
    if (max_delta <= 0) {
      out.rewards[i] = 0.0;
      continue;
    }
    const double r = static_cast<double>(deltas[i]) / static_cast<double>(max_delta);
    out.rewards[i] = (i == chosen) ? r : -r;
  }
  return out;
}

SamplerState update_weights(SamplerState state, const RewardVector& rewards,
                            const PolicyVector& policy) {
  const std::size_t n = state.n_tasks();
  if (rewards.rewards.size() != n || policy.probs.size() != n)
    throw std::invalid_argument("update_weights: length mismatch");
  const double rate = state.gamma / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!rewards.rewards[i]) continue;
    const double updated = state.weights[i] * std::exp(rate * (*rewards.rewards[i] / policy.probs[i]));
    if (!std::isfinite(updated) || !(updated > 0.0))
      throw NumericFault("update_weights: weight " + std::to_string(i) + " left (0, inf)");
    state.weights[i] = updated;
  }
  return state;
}

SamplerState reset_weights_epoch(SamplerState state) {
  std::fill(state.weights.begin(), state.weights.end(), 1.0);
  return state;
}

}  // namespace wcmtl
