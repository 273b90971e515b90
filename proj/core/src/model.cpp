#include "wcmtl/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "wcmtl/errors.hpp"

namespace wcmtl {

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

bool ModelParams::all_finite() const {
  if (!encoder.allFinite() || !encoder_bias.allFinite()) return false;
  for (const auto& h : heads)
    if (!h.weight.allFinite() || !h.bias.allFinite()) return false;
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.encoder = Eigen::MatrixXd::Zero(encoder.rows(), encoder.cols());
  z.encoder_bias = Eigen::VectorXd::Zero(encoder_bias.size());
  z.heads.reserve(heads.size());
  for (const auto& h : heads)
    z.heads.push_back({h.kind, Eigen::MatrixXd::Zero(h.weight.rows(), h.weight.cols()),
                       Eigen::VectorXd::Zero(h.bias.size())});
  return z;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  encoder += other.encoder;
  encoder_bias += other.encoder_bias;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    heads[i].weight += other.heads[i].weight;
    heads[i].bias += other.heads[i].bias;
  }
  return *this;
}

ModelParams& ModelParams::operator*=(double factor) {
  encoder *= factor;
  encoder_bias *= factor;
  for (auto& h : heads) {
    h.weight *= factor;
    h.bias *= factor;
  }
  return *this;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::Index total = encoder.size() + encoder_bias.size();
  for (const auto& h : heads) total += h.weight.size() + h.bias.size();
  Eigen::VectorXd flat(total);
  Eigen::Index at = 0;
  auto put = [&](const auto& m) {
    flat.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  };
  put(encoder);
  put(encoder_bias);
  for (const auto& h : heads) {
    put(h.weight);
    put(h.bias);
  }
  return flat;
}

void ModelParams::unflatten(const Eigen::VectorXd& flat) {
  Eigen::Index at = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(at, m.size());
    at += m.size();
  };
  take(encoder);
  take(encoder_bias);
  for (auto& h : heads) {
    take(h.weight);
    take(h.bias);
  }
  if (at != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

ModelParams init_model(std::size_t d_in, std::size_t d_hid, std::span<const HeadShape> heads,
                       Rng& rng) {
  if (d_in == 0 || d_hid == 0) throw std::invalid_argument("init_model: zero dimension");
  auto fill = [&rng](Eigen::MatrixXd& m, double bound) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  };
  const auto di = static_cast<Eigen::Index>(d_in);
  const auto dh = static_cast<Eigen::Index>(d_hid);

  ModelParams p;
  p.encoder.resize(dh, di);
  fill(p.encoder, 1.0 / std::sqrt(static_cast<double>(d_in)));
  p.encoder_bias = Eigen::VectorXd::Zero(dh);
  for (const auto& shape : heads) {
    if (shape.outputs < 1 || (shape.kind == TaskKind::regression && shape.outputs != 1))
      throw std::invalid_argument("init_model: bad head shape");
    Head h{shape.kind, Eigen::MatrixXd(shape.outputs, dh), Eigen::VectorXd::Zero(shape.outputs)};
    fill(h.weight, 1.0 / std::sqrt(static_cast<double>(d_hid)));
    p.heads.push_back(std::move(h));
  }
  return p;
}

namespace {

void check_batch(const ModelParams& params, const Batch& batch) {
  if (batch.task >= params.heads.size())
    throw std::invalid_argument("batch task " + std::to_string(batch.task) + " has no head");
  if (static_cast<std::size_t>(batch.inputs.cols()) != params.d_in())
    throw std::invalid_argument("batch input width does not match encoder");
  const auto& head = params.heads[batch.task];
  if (head.kind == TaskKind::classification) {
    if (batch.labels.size() != batch.size())
      throw std::invalid_argument("classification batch needs one label per row");
  } else if (static_cast<std::size_t>(batch.targets.size()) != batch.size()) {
    throw std::invalid_argument("regression batch needs one target per row");
  }
}

Eigen::MatrixXd hidden(const ModelParams& params, const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd pre = inputs * params.encoder.transpose();
  pre.rowwise() += params.encoder_bias.transpose();
  return pre.array().tanh().matrix();
}

Eigen::MatrixXd head_outputs(const Head& head, const Eigen::MatrixXd& h) {
  Eigen::MatrixXd out = h * head.weight.transpose();
  out.rowwise() += head.bias.transpose();
  return out;
}

// Row-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

// Loss and d(loss)/d(outputs) for one head.
double output_loss(const Head& head, const Eigen::MatrixXd& out, const Batch& batch,
                   Eigen::MatrixXd* d_out) {
  const auto rows = static_cast<double>(out.rows());
  if (head.kind == TaskKind::classification) {
    const Eigen::MatrixXd logp = log_softmax(out);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const int y = batch.labels[static_cast<std::size_t>(r)];
      if (y < 0 || y >= out.cols()) throw std::invalid_argument("label out of range");
      loss -= logp(r, y);
    }
    if (d_out) {
      *d_out = logp.array().exp();
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        (*d_out)(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
      *d_out /= rows;
    }
    return loss / rows;
  }
  const Eigen::VectorXd residual = out.col(0) - batch.targets;
  if (d_out) *d_out = (2.0 / rows) * residual;
  return residual.squaredNorm() / rows;
}

}  // namespace

Eigen::MatrixXd forward(const ModelParams& params, const Batch& batch) {
  check_batch(params, batch);
  return head_outputs(params.heads[batch.task], hidden(params, batch.inputs));
}

double batch_loss(const ModelParams& params, const Batch& batch) {
  const Eigen::MatrixXd out = forward(params, batch);
  return output_loss(params.heads[batch.task], out, batch, nullptr);
}

LossAndGradient loss_and_gradient(const ModelParams& params, const Batch& batch) {
  check_batch(params, batch);
  const Head& head = params.heads[batch.task];
  const Eigen::MatrixXd h = hidden(params, batch.inputs);
  const Eigen::MatrixXd out = head_outputs(head, h);

  LossAndGradient result{0.0, params.zeros_like()};
  Eigen::MatrixXd d_out;
  result.loss = output_loss(head, out, batch, &d_out);

  Head& g_head = result.grad.heads[batch.task];
  g_head.weight = d_out.transpose() * h;
  g_head.bias = d_out.colwise().sum().transpose();

  const Eigen::MatrixXd d_pre =
      ((d_out * head.weight).array() * (1.0 - h.array().square())).matrix();
  result.grad.encoder = d_pre.transpose() * batch.inputs;
  result.grad.encoder_bias = d_pre.colwise().sum().transpose();
  return result;
}

Gradient gradient(const ModelParams& params, const Batch& batch) {
  return loss_and_gradient(params, batch).grad;
}

ModelParams sgd_step(ModelParams params, const Gradient& accumulated, double lr, int accum_count) {
  if (accum_count < 1) throw std::invalid_argument("sgd_step: accum_count must be >= 1");
  if (lr == 0.0) return params;
  Gradient step = accumulated;
  step *= -lr / static_cast<double>(accum_count);
  params += step;
  if (!params.all_finite())
    throw NumericFault("sgd_step: parameters became non-finite (learning rate too large?)");
  return params;
}

EvalMetric evaluate_split(const ModelParams& params, TaskId head_id, const Split& split) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  if (head_id >= params.heads.size()) throw std::invalid_argument("evaluate: no such head");
  const Head& head = params.heads[head_id];
  Batch all{head_id, {}, split.inputs, split.labels, split.targets};
  check_batch(params, all);
  const Eigen::MatrixXd out = head_outputs(head, hidden(params, split.inputs));

  EvalMetric m;
  m.kind = head.kind;
  m.examples = split.size();
  m.mean_loss = output_loss(head, out, all, nullptr);
  if (head.kind == TaskKind::classification) {
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      Eigen::Index arg = 0;
      out.row(r).maxCoeff(&arg);
      if (arg == split.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    m.metric = static_cast<double>(correct) / static_cast<double>(split.size());
    m.score = m.metric;
  } else {
    m.metric = m.mean_loss;
    const double mean = split.targets.mean();
    const double variance = (split.targets.array() - mean).square().mean();
    m.score = variance > 0.0 ? 1.0 - m.metric / variance : 0.0;
  }
  return m;
}

}  // namespace wcmtl
