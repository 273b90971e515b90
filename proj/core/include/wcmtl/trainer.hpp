#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "wcmtl/buffer.hpp"
#include "wcmtl/model.hpp"
#include "wcmtl/rng.hpp"
#include "wcmtl/tasks.hpp"

namespace wcmtl {

/// Mixing parameter between worst-case (1) and loss-proportional (0)
/// selection, constant or stepped once per epoch.
struct PhiSchedule {
  enum class Kind { constant, anneal };

  Kind kind = Kind::constant;
  double value = 0.5;
  double start = 0.0;
  double end = 1.0;
  double step_per_epoch = 0.15;

  static PhiSchedule constant(double phi) { return {Kind::constant, phi, 0.0, 1.0, 0.15}; }
  static PhiSchedule anneal(double start = 0.0, double end = 1.0, double step = 0.15) {
    return {Kind::anneal, 0.0, start, end, step};
  }
};

double phi_value(const PhiSchedule& schedule, std::size_t epoch);

struct TaskLossSnapshot {
  std::vector<double> losses;     // v_i-weighted buffer averages
  std::vector<double> weights_v;  // the v_i already folded into `losses`
};

/// Draws p ~ U[0,1). If p < phi returns the index of the largest loss
/// (lowest index on ties); otherwise samples i with probability
/// losses[i] / sum(losses) using a second draw.
TaskId choose_index(const TaskLossSnapshot& snapshot, double phi, Rng& rng);

struct OptimizerConfig {
  double learning_rate = 0.05;
  int accumulation = 4;
};

struct TrainStats {
  std::vector<double> fresh_losses;  // one per consumed batch, FIFO order
  int optimizer_steps = 0;
};

struct TrainResult {
  ModelParams params;
  TrainStats stats;
};

/// One pass over the chosen queue in FIFO order with fresh losses and
/// gradients, stepping every `accumulation` batches and once more for a
/// trailing partial group. The queue itself is left for the caller to empty.
TrainResult train_on_queue(ModelParams params, const std::deque<QueueEntry>& queue,
                           const OptimizerConfig& optimizer);

}  // namespace wcmtl
