#include "wcmtl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wcmtl/errors.hpp"

namespace wcmtl {

double phi_value(const PhiSchedule& schedule, std::size_t epoch) {
  double phi = schedule.value;
  if (schedule.kind == PhiSchedule::Kind::anneal) {
    phi = schedule.start + static_cast<double>(epoch) * schedule.step_per_epoch;
    phi = schedule.step_per_epoch >= 0.0 ? std::min(schedule.end, phi) : std::max(schedule.end, phi);
  }
  return std::clamp(phi, 0.0, 1.0);
}

TaskId choose_index(const TaskLossSnapshot& snapshot, double phi, Rng& rng) {
  const auto& losses = snapshot.losses;
  if (losses.empty()) throw std::invalid_argument("choose_index: empty snapshot");
  const double p = rng.uniform();
  if (p < phi) {
    // max_element returns the first maximum, so ties go to the lowest index.
    return static_cast<TaskId>(std::max_element(losses.begin(), losses.end()) - losses.begin());
  }
  return rng.categorical(losses);
}

TrainResult train_on_queue(ModelParams params, const std::deque<QueueEntry>& queue,
                           const OptimizerConfig& optimizer) {
  if (queue.empty()) throw std::logic_error("train_on_queue: chosen queue is empty");
  if (optimizer.accumulation < 1) throw std::invalid_argument("train_on_queue: accumulation < 1");

  TrainResult result{std::move(params), {}};
  result.stats.fresh_losses.reserve(queue.size());
  Gradient accumulated = result.params.zeros_like();
  int pending = 0;
  auto step = [&] {
    result.params = sgd_step(std::move(result.params), accumulated, optimizer.learning_rate, pending);
    accumulated *= 0.0;
    pending = 0;
    ++result.stats.optimizer_steps;
  };

  for (const auto& entry : queue) {
    // Cached losses are stale once parameters move; recompute under the
    // current parameters.
    LossAndGradient lg = loss_and_gradient(result.params, entry.batch);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite())
      throw NumericFault("train_on_queue: non-finite loss or gradient on task " +
                         std::to_string(entry.batch.task));
    result.stats.fresh_losses.push_back(lg.loss);
    accumulated += lg.grad;
    if (++pending == optimizer.accumulation) step();
  }
  if (pending > 0) step();
  return result;
}

}  // namespace wcmtl
