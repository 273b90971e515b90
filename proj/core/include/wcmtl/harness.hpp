#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "wcmtl/buffer.hpp"
#include "wcmtl/config.hpp"
#include "wcmtl/metrics.hpp"
#include "wcmtl/model.hpp"
#include "wcmtl/rng.hpp"
#include "wcmtl/sampler.hpp"
#include "wcmtl/tasks.hpp"
#include "wcmtl/trainer.hpp"

namespace wcmtl {

/// Everything one experiment mutates. Single writer.
struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const TaskSuite> suite;
  ModelParams model;
  SamplerState sampler;
  Buffer buffer;
  Rng sampler_rng;
  Rng trainer_rng;
  Rng data_rng;
  MetricsSink* sink = nullptr;  // optional event log

  std::size_t n_tasks() const { return suite->size(); }
};

/// Builds the suite from config.suite and seeds.env unless one is supplied.
Experiment make_experiment(const ExperimentConfig& config,
                           std::shared_ptr<const TaskSuite> suite = nullptr);

struct RoundOutcome {
  std::vector<TaskId> refills;       // tasks refilled at round start
  std::vector<TaskId> actions;       // k sampler arms, in order
  std::vector<double> push_losses;   // loss of each action's batch
  TaskLossSnapshot snapshot;
  double phi = 0.0;
  TaskId chosen = 0;
  TrainStats train;
  std::vector<long> deltas;          // queue growth with refills excluded
  std::vector<long> raw_pushes;      // non-refill pushes per task
  PolicyVector policy;               // the policy the arms were drawn from
  RewardVector rewards;
  std::vector<double> weights_after;
  std::vector<long> queue_lengths_after;
};

/// One full round of the buffered bandit loop: refill empty queues, k
/// sampler pushes, choose, train on the chosen queue, reward, weight update,
/// empty the chosen queue.
RoundOutcome run_round(Experiment& exp, std::size_t epoch, std::size_t round);

/// k directly-trained batches drawn from a fixed baseline distribution.
void run_baseline_round(Experiment& exp, std::size_t epoch, std::size_t round);

std::size_t default_rounds_per_epoch(const std::vector<std::size_t>& train_sizes,
                                     std::size_t batch_size, std::size_t k);
std::size_t rounds_per_epoch(const ExperimentConfig& config, const TaskSuite& suite);

/// Baseline task distribution. annealed_mix moves linearly from
/// size-proportional at epoch 0 to uniform at the final epoch.
std::vector<double> baseline_probabilities(SamplerKind kind,
                                           const std::vector<std::size_t>& train_sizes,
                                           std::size_t epoch, std::size_t total_epochs);
TaskId baseline_sampler_step(SamplerKind kind, const std::vector<std::size_t>& train_sizes,
                             std::size_t epoch, std::size_t total_epochs, Rng& rng);

struct ExperimentResult {
  std::filesystem::path metrics_path;     // empty for in-memory runs
  std::filesystem::path checkpoint_path;
  std::filesystem::path config_path;
  std::shared_ptr<const TaskSuite> suite;
  ModelParams model;
  SamplerState sampler;
  std::size_t rounds_per_epoch = 0;
  std::vector<MetricsRecord> records;     // filled for in-memory runs only
  std::vector<EvalMetric> final_validation;
};

/// Runs config.epochs epochs. With an empty `out_dir` nothing is written and
/// records are returned in memory; otherwise writes metrics.csv,
/// config_echo.json and checkpoint.json. On any error the metrics written so
/// far are flushed before the exception propagates.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir = {},
                                std::shared_ptr<const TaskSuite> suite = nullptr);

// Transfer evaluation.

/// One alpha-perturbed copy of every suite task, sized per `transfer`.
std::vector<TaskSpec> make_transfer_tasks(const TaskSuite& suite, const TransferConfig& transfer,
                                          std::uint64_t seed);

/// Frozen encoder + the base task's head on the transfer test split.
/// Throws std::invalid_argument when the task kinds differ.
EvalMetric zero_shot_eval(const ModelParams& model, TaskId base_task, const TaskSpec& transfer);

struct FewShotOptions {
  std::size_t batch_size = 8;
  int epochs = 10;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  bool vary_seed = true;  // false: every repeat uses the same subsample
};

/// Shuffled minibatch SGD on `head` only, over every training row of `data`.
/// The encoder and all other heads are returned untouched.
ModelParams finetune_head(ModelParams model, TaskId head, const TaskSpec& data,
                          const FewShotOptions& options, Rng& rng);

struct FewShotResult {
  double fraction = 0.0;
  std::vector<EvalMetric> repeats;
  double mean_score = 0.0;
  double std_score = 0.0;  // sample standard deviation over repeats
  double mean_metric = 0.0;
  double std_metric = 0.0;
};

/// Per repeat: subsample the transfer training set, fine-tune only the base
/// task's head, evaluate on the transfer test split.
FewShotResult few_shot_eval(const ModelParams& model, TaskId base_task, const TaskSpec& transfer,
                            double fraction, int repeats, const FewShotOptions& options);

struct TransferRow {
  TaskId task = 0;
  std::string setting;  // "zero-shot" or "few-shot"
  double fraction = 0.0;
  double mean_score = 0.0;
  double std_score = 0.0;
  double mean_metric = 0.0;
  double std_metric = 0.0;
  int repeats = 0;
};

std::vector<TransferRow> run_transfer(const ModelParams& model, const ExperimentConfig& config,
                                      const TaskSuite& suite);
void write_transfer_rows(const std::vector<TransferRow>& rows, const std::filesystem::path& path);

}  // namespace wcmtl
