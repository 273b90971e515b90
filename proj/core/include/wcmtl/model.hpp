#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wcmtl/rng.hpp"
#include "wcmtl/types.hpp"

namespace wcmtl {

// Shared tanh encoder with one linear head per task:
//   logits = V_i * tanh(W x + b) + c_i
// Classification heads are scored with softmax cross-entropy, regression
// heads (one output) with squared error.

struct HeadShape {
  TaskKind kind = TaskKind::classification;
  int outputs = 2;  // class count, or 1 for regression
};

struct Head {
  TaskKind kind = TaskKind::classification;
  Eigen::MatrixXd weight;  // outputs x d_hid
  Eigen::VectorXd bias;    // outputs
};

struct ModelParams {
  Eigen::MatrixXd encoder;       // d_hid x d_in
  Eigen::VectorXd encoder_bias;  // d_hid
  std::vector<Head> heads;

  std::size_t d_in() const { return static_cast<std::size_t>(encoder.cols()); }
  std::size_t d_hid() const { return static_cast<std::size_t>(encoder.rows()); }
  std::size_t n_heads() const { return heads.size(); }

  bool all_finite() const;
  /// Same shapes, every entry zero. Gradients use this layout.
  ModelParams zeros_like() const;
  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double factor);
  /// Flattened view for finite-difference checks: encoder, encoder bias,
  /// then each head's weight and bias.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
};

using Gradient = ModelParams;

/// Symmetric uniform init, bound 1/sqrt(fan_in), biases zero.
ModelParams init_model(std::size_t d_in, std::size_t d_hid, std::span<const HeadShape> heads,
                       Rng& rng);

/// batch_size x d_out raw outputs (logits for classification).
/// Throws std::invalid_argument on dimension mismatch.
Eigen::MatrixXd forward(const ModelParams& params, const Batch& batch);

/// Mean cross-entropy or mean squared error over the batch.
double batch_loss(const ModelParams& params, const Batch& batch);

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

/// Analytic gradient of batch_loss. Only the batch task's head and the
/// encoder receive nonzero entries.
LossAndGradient loss_and_gradient(const ModelParams& params, const Batch& batch);
Gradient gradient(const ModelParams& params, const Batch& batch);

/// params - lr * accumulated / accum_count. Throws NumericFault when the
/// result is not finite.
ModelParams sgd_step(ModelParams params, const Gradient& accumulated, double lr, int accum_count);

struct EvalMetric {
  TaskKind kind = TaskKind::classification;
  double metric = 0.0;     // accuracy, or MSE for regression
  double mean_loss = 0.0;
  double score = 0.0;      // higher is better: accuracy, or R^2 for regression
  std::size_t examples = 0;
};

/// Full-split evaluation of one head. Throws std::invalid_argument for an
/// empty split.
EvalMetric evaluate_split(const ModelParams& params, TaskId head, const Split& split);

}  // namespace wcmtl
