#include "wcmtl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "wcmtl/errors.hpp"

namespace wcmtl {

const Split& TaskSpec::split(SplitKind which) const {
  switch (which) {
    case SplitKind::train: return train;
    case SplitKind::validation: return validation;
    case SplitKind::test: return test;
  }
  throw std::invalid_argument("unknown split");
}

void SuiteRecipe::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("suite: " + msg); };
  if (n_tasks < 2) fail("n_tasks must be at least 2");
  if (min_train == 0 || max_train < min_train) fail("need 0 < min_train <= max_train");
  if (n_val == 0 || n_test == 0) fail("n_val and n_test must be positive");
  if (d_in == 0 || d_latent == 0) fail("dimensions must be positive");
  if (!(alpha >= 0.0) || !(noise >= 0.0) || !(margin >= 0.0)) fail("alpha, noise, margin must be >= 0");
  if (!(loss_scale > 0.0)) fail("loss_scale must be positive");
  if (class_cycle.empty()) fail("class_cycle must not be empty");
  for (int c : class_cycle)
    if (c < 2) fail("class counts must be >= 2");
  for (TaskId r : regression_tasks)
    if (r >= n_tasks) fail("regression task index out of range");
  if (outlier_task && *outlier_task >= n_tasks) fail("outlier_task out of range");
  if (scaled_task) {
    if (std::find(regression_tasks.begin(), regression_tasks.end(), *scaled_task) ==
        regression_tasks.end())
      fail("scaled_task must be a regression task");
  }
}

std::vector<std::size_t> TaskSuite::train_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& t : tasks) out.push_back(t.n_train());
  return out;
}

std::vector<HeadShape> TaskSuite::head_shapes() const {
  std::vector<HeadShape> out;
  for (const auto& t : tasks) out.push_back(t.head_shape());
  return out;
}

namespace {

Eigen::MatrixXd random_direction(Eigen::Index rows, Eigen::Index cols, double norm, Rng& rng) {
  Eigen::MatrixXd d(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) d(r, c) = rng.normal();
  if (norm == 0.0) return Eigen::MatrixXd::Zero(rows, cols);
  return d * (norm / d.norm());
}

Eigen::VectorXd teacher_output(const Teacher& t, const Eigen::VectorXd& x) {
  return t.readout * (t.latent * x).array().tanh().matrix();
}

struct Example {
  Eigen::VectorXd x;
  int label = 0;
  double target = 0.0;
};

Example draw_example(const TaskSpec& task, Rng& rng) {
  constexpr int kMaxAttempts = 10000;
  const auto d = static_cast<Eigen::Index>(task.d_in);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Example ex{Eigen::VectorXd(d)};
    for (Eigen::Index i = 0; i < d; ++i) ex.x(i) = rng.normal();
    const Eigen::VectorXd z = teacher_output(task.teacher, ex.x);
    if (task.kind == TaskKind::regression) {
      ex.target = std::sqrt(task.scale) * (z(0) + task.noise * rng.normal());
      return ex;
    }
    if (task.margin > 0.0) {
      Eigen::VectorXd sorted = z;
      std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>{});
      if (sorted(0) - sorted(1) < task.margin) continue;
    }
    Eigen::VectorXd noisy = z;
    for (Eigen::Index k = 0; k < noisy.size(); ++k) noisy(k) += task.noise * rng.normal();
    Eigen::Index arg = 0;
    noisy.maxCoeff(&arg);
    ex.label = static_cast<int>(arg);
    return ex;
  }
  throw ConfigError("task " + std::to_string(task.id) +
                    ": margin rejection accepted no example; lower the margin");
}

Split gather(const std::vector<Example>& pool, const std::vector<std::uint32_t>& ids,
             TaskKind kind, std::size_t d_in) {
  Split s;
  s.ids = ids;
  s.inputs.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(d_in));
  if (kind == TaskKind::regression) s.targets.resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const Example& ex = pool[ids[r]];
    s.inputs.row(static_cast<Eigen::Index>(r)) = ex.x.transpose();
    if (kind == TaskKind::regression)
      s.targets(static_cast<Eigen::Index>(r)) = ex.target;
    else
      s.labels.push_back(ex.label);
  }
  return s;
}

// Draws one pool of n_train + n_val + n_test examples and partitions it by a
// random permutation, so the three id sets are disjoint.
void generate_data(TaskSpec& task, const SplitSizes& sizes) {
  Rng rng(task.data_seed, 0);
  const std::size_t total = sizes.n_train + sizes.n_val + sizes.n_test;
  std::vector<Example> pool;
  pool.reserve(total);
  for (std::size_t i = 0; i < total; ++i) pool.push_back(draw_example(task, rng));

  std::vector<std::uint32_t> perm(total);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = total; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  const auto train_end = perm.begin() + static_cast<std::ptrdiff_t>(sizes.n_train);
  const auto val_end = train_end + static_cast<std::ptrdiff_t>(sizes.n_val);
  task.train = gather(pool, {perm.begin(), train_end}, task.kind, task.d_in);
  task.validation = gather(pool, {train_end, val_end}, task.kind, task.d_in);
  task.test = gather(pool, {val_end, perm.end()}, task.kind, task.d_in);
}

}  // namespace

TaskSuite make_task_suite(const SuiteRecipe& recipe, std::uint64_t seed) {
  recipe.validate();
  Rng rng(seed, streams::kSuite);
  const auto d_in = static_cast<Eigen::Index>(recipe.d_in);
  const auto d_lat = static_cast<Eigen::Index>(recipe.d_latent);

  TaskSuite suite;
  suite.alpha = recipe.alpha;
  suite.center.resize(d_lat, d_in);
  for (Eigen::Index c = 0; c < d_in; ++c)
    for (Eigen::Index r = 0; r < d_lat; ++r)
      suite.center(r, c) = rng.normal() / std::sqrt(static_cast<double>(recipe.d_in));

  const double ratio = static_cast<double>(recipe.max_train) / static_cast<double>(recipe.min_train);
  std::size_t class_slot = 0;
  for (TaskId i = 0; i < recipe.n_tasks; ++i) {
    TaskSpec t;
    t.id = i;
    t.d_in = recipe.d_in;
    t.noise = recipe.noise;
    t.margin = recipe.margin;
    const bool regression = std::find(recipe.regression_tasks.begin(), recipe.regression_tasks.end(),
                                      i) != recipe.regression_tasks.end();
    t.kind = regression ? TaskKind::regression : TaskKind::classification;
    t.classes = regression ? 1 : recipe.class_cycle[class_slot++ % recipe.class_cycle.size()];
    t.scale = (recipe.scaled_task && *recipe.scaled_task == i) ? recipe.loss_scale : 1.0;

    const double radius = (recipe.outlier_task && *recipe.outlier_task == i)
                              ? recipe.alpha
                              : recipe.alpha * (0.2 + 0.3 * rng.uniform());
    t.teacher.latent = suite.center + random_direction(d_lat, d_in, radius, rng);
    t.teacher.readout.resize(t.outputs(), d_lat);
    const double readout_scale = regression ? 1.0 / std::sqrt(static_cast<double>(d_lat)) : 1.0;
    for (Eigen::Index c = 0; c < d_lat; ++c)
      for (Eigen::Index r = 0; r < t.teacher.readout.rows(); ++r)
        t.teacher.readout(r, c) = readout_scale * rng.normal();
    t.data_seed = rng.next();

    const double position = static_cast<double>(i) / static_cast<double>(recipe.n_tasks - 1);
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(recipe.min_train) * std::pow(ratio, position)));
    generate_data(t, {n_train, recipe.n_val, recipe.n_test});
    suite.tasks.push_back(std::move(t));
  }
  return suite;
}

Batch make_batch(const TaskSpec& task, std::span<const std::uint32_t> rows) {
  Batch b;
  b.task = task.id;
  b.rows.assign(rows.begin(), rows.end());
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(task.d_in));
  if (task.kind == TaskKind::regression) b.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= task.n_train()) throw std::out_of_range("make_batch: row outside training split");
    const auto src = static_cast<Eigen::Index>(rows[r]);
    b.inputs.row(static_cast<Eigen::Index>(r)) = task.train.inputs.row(src);
    if (task.kind == TaskKind::regression)
      b.targets(static_cast<Eigen::Index>(r)) = task.train.targets(src);
    else
      b.labels.push_back(task.train.labels[rows[r]]);
  }
  return b;
}

Batch sample_batch(const TaskSpec& task, std::size_t batch_size, Rng& rng) {
  if (task.n_train() == 0) throw std::invalid_argument("sample_batch: task has no training data");
  std::vector<std::uint32_t> rows(batch_size);
  for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(task.n_train()));
  return make_batch(task, rows);
}

TaskSpec perturb_task(const TaskSpec& task, double alpha, Rng& rng,
                      std::optional<SplitSizes> sizes) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("perturb_task: alpha must be >= 0");
  TaskSpec out;
  out.id = task.id;
  out.kind = task.kind;
  out.classes = task.classes;
  out.d_in = task.d_in;
  out.noise = task.noise;
  out.scale = task.scale;
  out.margin = task.margin;
  out.teacher.readout = task.teacher.readout;
  out.teacher.latent = task.teacher.latent +
                       random_direction(task.teacher.latent.rows(), task.teacher.latent.cols(), alpha, rng);
  out.data_seed = rng.next();
  generate_data(out, sizes.value_or(SplitSizes{task.train.size(), task.validation.size(),
                                               task.test.size()}));
  return out;
}

TaskSpec subsample_train(const TaskSpec& task, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("subsample_train: fraction must lie in (0, 1]");
  const std::size_t n = task.n_train();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (keep == 0) throw std::invalid_argument("subsample_train: subset would be empty");

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = 0; i < keep; ++i) std::swap(perm[i], perm[i + rng.below(n - i)]);
  std::vector<std::uint32_t> rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(rows.begin(), rows.end());

  TaskSpec out = task;
  Split& s = out.train;
  s.inputs.resize(static_cast<Eigen::Index>(keep), task.train.inputs.cols());
  s.ids.clear();
  s.labels.clear();
  if (task.kind == TaskKind::regression) s.targets.resize(static_cast<Eigen::Index>(keep));
  for (std::size_t r = 0; r < keep; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    s.inputs.row(static_cast<Eigen::Index>(r)) = task.train.inputs.row(src);
    s.ids.push_back(task.train.ids[rows[r]]);
    if (task.kind == TaskKind::regression)
      s.targets(static_cast<Eigen::Index>(r)) = task.train.targets(src);
    else
      s.labels.push_back(task.train.labels[rows[r]]);
  }
  return out;
}

ModelParams teacher_as_model(const TaskSpec& task, std::size_t d_hid,
                             std::span<const HeadShape> heads, double sharpness) {
  const auto d_lat = task.teacher.latent.rows();
  if (static_cast<Eigen::Index>(d_hid) < d_lat)
    throw std::invalid_argument("teacher_as_model: d_hid smaller than the teacher latent width");
  if (task.id >= heads.size()) throw std::invalid_argument("teacher_as_model: no head for task");

  ModelParams p;
  p.encoder = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_hid), static_cast<Eigen::Index>(task.d_in));
  p.encoder.topRows(d_lat) = task.teacher.latent;
  p.encoder_bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_hid));
  for (const auto& shape : heads)
    p.heads.push_back({shape.kind, Eigen::MatrixXd::Zero(shape.outputs, static_cast<Eigen::Index>(d_hid)),
                       Eigen::VectorXd::Zero(shape.outputs)});
  Head& h = p.heads[task.id];
  if (h.kind != task.kind || h.weight.rows() != task.outputs())
    throw std::invalid_argument("teacher_as_model: head shape does not match task");
  const double gain = task.kind == TaskKind::classification ? sharpness : std::sqrt(task.scale);
  h.weight.leftCols(d_lat) = gain * task.teacher.readout;
  return p;
}

EvalMetric evaluate(const ModelParams& params, const TaskSpec& task, SplitKind which) {
  return evaluate_split(params, task.id, task.split(which));
}

}  // namespace wcmtl
