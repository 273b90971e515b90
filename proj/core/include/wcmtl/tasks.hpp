#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wcmtl/model.hpp"
#include "wcmtl/rng.hpp"
#include "wcmtl/types.hpp"

namespace wcmtl {

// Synthetic task universe. Every task is labelled by a small teacher network
//   z = readout * tanh(latent * x)
// whose latent projection is a shared center S plus a task offset delta_i.
// Classification labels are argmax(z + noise); regression targets are
// sqrt(scale) * (z + noise), so `scale` multiplies the loss magnitude.

struct Teacher {
  Eigen::MatrixXd latent;   // d_latent x d_in, S + delta
  Eigen::MatrixXd readout;  // outputs x d_latent
};

enum class SplitKind { train, validation, test };

struct TaskSpec {
  TaskId id = 0;
  TaskKind kind = TaskKind::classification;
  int classes = 2;  // 1 for regression
  std::size_t d_in = 16;
  Teacher teacher;
  double noise = 0.0;
  double scale = 1.0;
  double margin = 0.0;  // minimum clean logit gap for classification inputs
  std::uint64_t data_seed = 0;

  Split train;
  Split validation;
  Split test;

  std::size_t n_train() const { return train.size(); }
  int outputs() const { return kind == TaskKind::regression ? 1 : classes; }
  HeadShape head_shape() const { return {kind, outputs()}; }
  const Split& split(SplitKind which) const;
};

struct SuiteRecipe {
  std::size_t n_tasks = 8;
  std::size_t min_train = 500;
  std::size_t max_train = 50000;
  std::size_t n_val = 500;
  std::size_t n_test = 1000;
  std::size_t d_in = 16;
  std::size_t d_latent = 8;
  double alpha = 3.0;
  double noise = 0.05;
  double margin = 0.05;
  std::vector<TaskId> regression_tasks{3, 5};
  std::optional<TaskId> scaled_task = 3;   // the large-loss regression task
  double loss_scale = 10.0;
  std::optional<TaskId> outlier_task = 1;  // teacher offset at the full radius
  std::vector<int> class_cycle{2, 2, 3};   // class counts assigned round-robin

  void validate() const;  // throws ConfigError
};

struct TaskSuite {
  std::vector<TaskSpec> tasks;
  double alpha = 0.0;
  Eigen::MatrixXd center;  // shared latent component S

  std::size_t size() const { return tasks.size(); }
  std::vector<std::size_t> train_sizes() const;
  std::vector<HeadShape> head_shapes() const;
};

/// Deterministic in (recipe, seed). Train sizes are log-spaced from
/// min_train to max_train by task id.
TaskSuite make_task_suite(const SuiteRecipe& recipe, std::uint64_t seed);

/// batch_size training rows drawn uniformly with replacement.
Batch sample_batch(const TaskSpec& task, std::size_t batch_size, Rng& rng);

/// Materialize specific training rows (used to rebuild batches from handles).
Batch make_batch(const TaskSpec& task, std::span<const std::uint32_t> rows);

struct SplitSizes {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
};

/// Shift the teacher's latent projection by a uniformly oriented offset of
/// norm exactly `alpha` and draw fresh data pools. Sizes default to the
/// source task's.
TaskSpec perturb_task(const TaskSpec& task, double alpha, Rng& rng,
                      std::optional<SplitSizes> sizes = std::nullopt);

/// Keep a uniform random subset of ceil(fraction * n_train) training rows.
TaskSpec subsample_train(const TaskSpec& task, double fraction, Rng& rng);

/// The teacher written as ModelParams: head `task.id` reproduces the teacher,
/// every other head is zero. Classification logits are multiplied by
/// `sharpness` so that margin-separated examples get near-zero loss.
ModelParams teacher_as_model(const TaskSpec& task, std::size_t d_hid,
                             std::span<const HeadShape> heads, double sharpness = 200.0);

EvalMetric evaluate(const ModelParams& params, const TaskSpec& task, SplitKind which);

}  // namespace wcmtl
