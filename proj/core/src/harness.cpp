#include "wcmtl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "wcmtl/checkpoint.hpp"
#include "wcmtl/errors.hpp"

namespace wcmtl {

namespace {

void emit(Experiment& exp, std::size_t epoch, std::size_t round, EventKind event,
          std::optional<TaskId> task, double value, Extras extras = {}) {
  if (!exp.sink) return;
  MetricsRecord rec;
  rec.epoch = static_cast<long>(epoch);
  rec.round = static_cast<long>(round);
  rec.event = event;
  rec.task = task;
  rec.value = value;
  rec.extras = std::move(extras);
  exp.sink->record(std::move(rec));
}

std::string indexed(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

void evaluate_all(Experiment& exp, std::size_t epoch, std::size_t round, bool initial,
                  std::vector<EvalMetric>* out) {
  for (const auto& task : exp.suite->tasks) {
    const EvalMetric m = evaluate(exp.model, task, SplitKind::validation);
    Extras extras{{"metric", m.metric}, {"score", m.score}};
    if (initial) extras.emplace_back("initial", 1.0);
    emit(exp, epoch, round, EventKind::eval, task.id, m.mean_loss, std::move(extras));
    if (out) out->push_back(m);
  }
}

}  // namespace

Experiment make_experiment(const ExperimentConfig& config, std::shared_ptr<const TaskSuite> suite) {
  config.validate();
  if (!suite) suite = std::make_shared<const TaskSuite>(make_task_suite(config.suite, config.seeds.env));
  if (suite->size() != config.suite.n_tasks)
    throw ConfigError("supplied suite does not match suite.n_tasks");

  Rng model_rng(config.seeds.model, streams::kModel);
  const auto shapes = suite->head_shapes();
  ModelParams model = init_model(config.suite.d_in, config.d_hid, shapes, model_rng);

  return Experiment{config,
                    suite,
                    std::move(model),
                    init_sampler(suite->size(), config.gamma),
                    Buffer(suite->size(), config.capacity),
                    Rng(config.seeds.sampler, streams::kSampler),
                    Rng(config.seeds.trainer, streams::kTrainer),
                    Rng(config.seeds.env, streams::kData),
                    nullptr};
}

RoundOutcome run_round(Experiment& exp, std::size_t epoch, std::size_t round) {
  const std::size_t n = exp.n_tasks();
  const auto& tasks = exp.suite->tasks;
  const auto& cfg = exp.config;
  RoundOutcome out;

  const std::vector<long> before = exp.buffer.lengths();
  std::vector<long> refill_count(n, 0);
  out.raw_pushes.assign(n, 0);

  auto push = [&](TaskId task, bool refill) {
    Batch batch = sample_batch(tasks[task], cfg.batch_size, exp.data_rng);
    const double loss = batch_loss(exp.model, batch);
    if (!std::isfinite(loss)) throw NumericFault("non-finite loss on task " + std::to_string(task));
    exp.buffer.push(task, QueueEntry{std::move(batch), loss, refill});
    emit(exp, epoch, round, EventKind::push, task, loss,
         {{"refill", refill ? 1.0 : 0.0}, {"queue_len", static_cast<double>(exp.buffer.size(task))}});
    return loss;
  };

  // Refill every empty queue so each task has a loss estimate.
  for (TaskId i = 0; i < n; ++i) {
    if (exp.buffer.size(i) != 0) continue;
    push(i, true);
    ++refill_count[i];
    out.refills.push_back(i);
  }

  out.policy = policy(exp.sampler);
  std::vector<bool> selected(n, false);
  for (std::size_t tau = 0; tau < cfg.k(); ++tau) {
    const TaskId arm = sample_arm(out.policy, exp.sampler_rng);
    out.actions.push_back(arm);
    out.push_losses.push_back(push(arm, false));
    selected[arm] = true;
    ++out.raw_pushes[arm];
  }

  out.phi = phi_value(cfg.phi, epoch);
  out.snapshot.weights_v = cfg.v();
  for (TaskId i = 0; i < n; ++i)
    out.snapshot.losses.push_back(exp.buffer.average_loss(i, out.snapshot.weights_v[i]));
  out.chosen = choose_index(out.snapshot, out.phi, exp.trainer_rng);
  {
    Extras extras{{"phi", out.phi}};
    for (TaskId i = 0; i < n; ++i) extras.emplace_back(indexed("loss_", i), out.snapshot.losses[i]);
    emit(exp, epoch, round, EventKind::choose, out.chosen, out.snapshot.losses[out.chosen],
         std::move(extras));
  }

  TrainResult trained = train_on_queue(std::move(exp.model), exp.buffer.queue(out.chosen),
                                       {cfg.learning_rate, cfg.accumulation});
  exp.model = std::move(trained.params);
  out.train = std::move(trained.stats);
  for (std::size_t b = 0; b < out.train.fresh_losses.size(); ++b)
    emit(exp, epoch, round, EventKind::train, out.chosen, out.train.fresh_losses[b],
         {{"batch", static_cast<double>(b)}});

  std::vector<long> after = exp.buffer.lengths();
  for (TaskId i = 0; i < n; ++i) after[i] -= refill_count[i];
  out.deltas = delta_counts(before, after);
  out.rewards = compute_rewards(out.deltas, selected, out.chosen);
  for (TaskId i = 0; i < n; ++i) {
    if (!out.rewards.rewards[i]) continue;
    emit(exp, epoch, round, EventKind::reward, i, *out.rewards.rewards[i],
         {{"delta", static_cast<double>(out.deltas[i])},
          {"raw_push", static_cast<double>(out.raw_pushes[i])},
          {"refill_push", static_cast<double>(refill_count[i])},
          {"before", static_cast<double>(before[i])},
          {"queue_len", static_cast<double>(exp.buffer.size(i))}});
  }

  exp.sampler = update_weights(std::move(exp.sampler), out.rewards, out.policy);
  out.weights_after = exp.sampler.weights;
  {
    Extras extras;
    for (TaskId i = 0; i < n; ++i) extras.emplace_back(indexed("w_", i), exp.sampler.weights[i]);
    for (TaskId i = 0; i < n; ++i) extras.emplace_back(indexed("p_", i), out.policy.probs[i]);
    const double total = std::accumulate(exp.sampler.weights.begin(), exp.sampler.weights.end(), 0.0);
    emit(exp, epoch, round, EventKind::update, std::nullopt, total, std::move(extras));
  }

  exp.buffer.empty_queue(out.chosen);
  out.queue_lengths_after = exp.buffer.lengths();
  return out;
}

std::vector<double> baseline_probabilities(SamplerKind kind,
                                           const std::vector<std::size_t>& train_sizes,
                                           std::size_t epoch, std::size_t total_epochs) {
  const std::size_t n = train_sizes.size();
  if (n == 0) throw std::invalid_argument("baseline_probabilities: no tasks");
  auto normalized = [](std::vector<double> w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    return w;
  };
  const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
  std::vector<double> by_size(train_sizes.begin(), train_sizes.end());
  by_size = normalized(by_size);

  switch (kind) {
    case SamplerKind::uniform: return uniform;
    case SamplerKind::size_proportional: return by_size;
    case SamplerKind::sqrt_size: {
      std::vector<double> w;
      for (auto s : train_sizes) w.push_back(std::sqrt(static_cast<double>(s)));
      return normalized(std::move(w));
    }
    case SamplerKind::annealed_mix: {
      const double t = total_epochs > 1
                           ? std::min(1.0, static_cast<double>(epoch) / static_cast<double>(total_epochs - 1))
                           : 0.0;
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = (1.0 - t) * by_size[i] + t * uniform[i];
      return w;
    }
    case SamplerKind::worst_case_bandit: break;
  }
  throw std::invalid_argument("baseline_probabilities: not a baseline sampler kind");
}

TaskId baseline_sampler_step(SamplerKind kind, const std::vector<std::size_t>& train_sizes,
                             std::size_t epoch, std::size_t total_epochs, Rng& rng) {
  return rng.categorical(baseline_probabilities(kind, train_sizes, epoch, total_epochs));
}

void run_baseline_round(Experiment& exp, std::size_t epoch, std::size_t round) {
  const auto& cfg = exp.config;
  const auto sizes = exp.suite->train_sizes();
  const auto probs = baseline_probabilities(cfg.sampler, sizes, epoch, cfg.epochs);

  Gradient accumulated = exp.model.zeros_like();
  int pending = 0;
  auto step = [&] {
    exp.model = sgd_step(std::move(exp.model), accumulated, cfg.learning_rate, pending);
    accumulated *= 0.0;
    pending = 0;
  };
  for (std::size_t tau = 0; tau < cfg.k(); ++tau) {
    const TaskId task = exp.sampler_rng.categorical(probs);
    emit(exp, epoch, round, EventKind::choose, task, probs[task]);
    const Batch batch = sample_batch(exp.suite->tasks[task], cfg.batch_size, exp.data_rng);
    LossAndGradient lg = loss_and_gradient(exp.model, batch);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite())
      throw NumericFault("non-finite loss or gradient on task " + std::to_string(task));
    emit(exp, epoch, round, EventKind::train, task, lg.loss, {{"batch", static_cast<double>(tau)}});
    accumulated += lg.grad;
    if (++pending == cfg.accumulation) step();
  }
  if (pending > 0) step();
}

std::size_t default_rounds_per_epoch(const std::vector<std::size_t>& train_sizes,
                                     std::size_t batch_size, std::size_t k) {
  const std::size_t total = std::accumulate(train_sizes.begin(), train_sizes.end(), std::size_t{0});
  const std::size_t per_round = batch_size * k;
  return (total + per_round - 1) / per_round;
}

std::size_t rounds_per_epoch(const ExperimentConfig& config, const TaskSuite& suite) {
  if (config.rounds_per_epoch) return *config.rounds_per_epoch;
  return default_rounds_per_epoch(suite.train_sizes(), config.batch_size, config.k());
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                std::shared_ptr<const TaskSuite> suite) {
  Experiment exp = make_experiment(config, std::move(suite));
  ExperimentResult result;
  result.suite = exp.suite;
  result.rounds_per_epoch = rounds_per_epoch(config, *exp.suite);

  MetricsSink sink;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string());
    result.metrics_path = out_dir / "metrics.csv";
    result.config_path = out_dir / "config_echo.json";
    result.checkpoint_path = out_dir / "checkpoint.json";

    nlohmann::ordered_json echo;
    echo["config"] = nlohmann::ordered_json::parse(config_to_json(config));
    echo["train_sizes"] = exp.suite->train_sizes();
    echo["rounds_per_epoch"] = result.rounds_per_epoch;
    std::ofstream out(result.config_path, std::ios::out | std::ios::trunc | std::ios::binary);
    out << echo.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + result.config_path.string());

    sink = MetricsSink(result.metrics_path);
  }
  exp.sink = &sink;

  try {
    evaluate_all(exp, 0, 0, true, config.epochs == 0 ? &result.final_validation : nullptr);
    sink.flush();
    const bool bandit = config.sampler == SamplerKind::worst_case_bandit;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      exp.sampler = reset_weights_epoch(std::move(exp.sampler));
      for (std::size_t round = 0; round < result.rounds_per_epoch; ++round) {
        if (bandit)
          run_round(exp, epoch, round);
        else
          run_baseline_round(exp, epoch, round);
        sink.flush();
      }
      result.final_validation.clear();
      evaluate_all(exp, epoch, result.rounds_per_epoch, false, &result.final_validation);
      sink.flush();
    }
  } catch (...) {
    // Partial metrics stay parseable: every completed record is on disk.
    sink.close();
    throw;
  }
  sink.close();

  if (!out_dir.empty())
    write_checkpoint(result.checkpoint_path, exp.model, exp.sampler, &exp.buffer);
  else
    result.records = sink.records();
  result.model = std::move(exp.model);
  result.sampler = std::move(exp.sampler);
  return result;
}

std::vector<TaskSpec> make_transfer_tasks(const TaskSuite& suite, const TransferConfig& transfer,
                                          std::uint64_t seed) {
  Rng rng(seed, streams::kTransfer);
  std::vector<TaskSpec> out;
  for (const auto& task : suite.tasks)
    out.push_back(perturb_task(task, transfer.alpha, rng,
                               SplitSizes{transfer.n_train, transfer.n_val, transfer.n_test}));
  return out;
}

namespace {

void check_head_matches(const ModelParams& model, TaskId base, const TaskSpec& transfer) {
  if (base >= model.n_heads()) throw std::invalid_argument("transfer: no head for base task");
  const Head& h = model.heads[base];
  if (h.kind != transfer.kind || h.weight.rows() != transfer.outputs())
    throw std::invalid_argument("transfer: task kind does not match the base task's head");
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double shift = xs.front();
  double m = 0.0;
  for (double x : xs) m += x - shift;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - shift - m) * (x - shift - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

ModelParams finetune_head(ModelParams model, TaskId head, const TaskSpec& data,
                          const FewShotOptions& options, Rng& rng) {
  check_head_matches(model, head, data);
  std::vector<std::uint32_t> order(data.n_train());
  std::iota(order.begin(), order.end(), 0u);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t at = 0; at < order.size(); at += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, order.size() - at);
      Batch batch = make_batch(data, std::span(order).subspan(at, len));
      batch.task = head;
      Gradient g = gradient(model, batch);
      // Encoder frozen; only the reused head moves.
      g.encoder.setZero();
      g.encoder_bias.setZero();
      model = sgd_step(std::move(model), g, options.learning_rate, 1);
    }
  }
  return model;
}

EvalMetric zero_shot_eval(const ModelParams& model, TaskId base_task, const TaskSpec& transfer) {
  check_head_matches(model, base_task, transfer);
  return evaluate_split(model, base_task, transfer.test);
}

FewShotResult few_shot_eval(const ModelParams& model, TaskId base_task, const TaskSpec& transfer,
                            double fraction, int repeats, const FewShotOptions& options) {
  check_head_matches(model, base_task, transfer);
  if (repeats < 1) throw std::invalid_argument("few_shot_eval: repeats must be >= 1");
  if (options.batch_size == 0) throw std::invalid_argument("few_shot_eval: batch_size must be positive");

  FewShotResult result;
  result.fraction = fraction;
  std::vector<double> scores, metrics;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng(options.seed, streams::kTransfer + 1 + (options.vary_seed ? static_cast<std::uint64_t>(rep) : 0));
    const TaskSpec sub = subsample_train(transfer, fraction, rng);
    if (sub.n_train() < options.batch_size)
      throw std::invalid_argument("few_shot_eval: subsample of " + std::to_string(sub.n_train()) +
                                  " examples is smaller than one batch");

    const ModelParams tuned = finetune_head(model, base_task, sub, options, rng);
    const EvalMetric m = evaluate_split(tuned, base_task, transfer.test);
    result.repeats.push_back(m);
    scores.push_back(m.score);
    metrics.push_back(m.metric);
  }
  result.mean_score = mean_of(scores);
  result.std_score = sample_std(scores);
  result.mean_metric = mean_of(metrics);
  result.std_metric = sample_std(metrics);
  return result;
}

std::vector<TransferRow> run_transfer(const ModelParams& model, const ExperimentConfig& config,
                                      const TaskSuite& suite) {
  const auto transfer_tasks = make_transfer_tasks(suite, config.transfer, config.seeds.env);
  FewShotOptions options{config.batch_size, config.transfer.finetune_epochs, config.transfer.finetune_lr,
                         config.seeds.env, true};
  std::vector<TransferRow> rows;
  for (const auto& t : transfer_tasks) {
    const EvalMetric zs = zero_shot_eval(model, t.id, t);
    rows.push_back({t.id, "zero-shot", 0.0, zs.score, 0.0, zs.metric, 0.0, 1});
    for (double fraction : config.transfer.fractions) {
      const FewShotResult fs = few_shot_eval(model, t.id, t, fraction, config.transfer.repeats, options);
      rows.push_back({t.id, "few-shot", fraction, fs.mean_score, fs.std_score, fs.mean_metric,
                      fs.std_metric, config.transfer.repeats});
    }
  }
  return rows;
}

void write_transfer_rows(const std::vector<TransferRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "task,setting,fraction,mean_score,std_score,mean_metric,std_metric,repeats\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.setting << ',' << format_real(r.fraction) << ',' << format_real(r.mean_score)
        << ',' << format_real(r.std_score) << ',' << format_real(r.mean_metric) << ','
        << format_real(r.std_metric) << ',' << r.repeats << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace wcmtl
