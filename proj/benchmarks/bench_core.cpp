#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "wcmtl/buffer.hpp"
#include "wcmtl/harness.hpp"
#include "wcmtl/model.hpp"
#include "wcmtl/sampler.hpp"

using namespace wcmtl;

namespace {

void BM_PolicyAndUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto s = init_sampler(n, 0.001);
  Rng rng(1);
  std::vector<long> deltas(n);
  std::vector<bool> selected(n);
  long rounds = 0;
  for (auto _ : state) {
    // Experiments reset the weights every epoch; do the same so they stay finite.
    if (++rounds % 1000 == 0) s = reset_weights_epoch(std::move(s));
    const auto p = policy(s);
    for (std::size_t i = 0; i < n; ++i) {
      deltas[i] = static_cast<long>(rng.below(4));
      selected[i] = deltas[i] > 0;
    }
    s = update_weights(std::move(s), compute_rewards(deltas, selected, sample_arm(p, rng)), p);
    benchmark::DoNotOptimize(s.weights.data());
  }
}
BENCHMARK(BM_PolicyAndUpdate)->Arg(8)->Arg(64);

void BM_BufferPush(benchmark::State& state) {
  Buffer buffer(8, 50);
  QueueEntry e;
  e.batch.rows.assign(8, 0);
  e.loss = 0.5;
  TaskId t = 0;
  for (auto _ : state) {
    buffer.push(t, e);
    t = (t + 1) % 8;
  }
}
BENCHMARK(BM_BufferPush);

void BM_Gradient(benchmark::State& state) {
  const ExperimentConfig config;
  const auto suite = std::make_shared<const TaskSuite>(make_task_suite(config.suite, 1));
  auto exp = make_experiment(config, suite);
  const Batch batch = sample_batch(suite->tasks[0], config.batch_size, exp.data_rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(exp.model, batch).loss);
}
BENCHMARK(BM_Gradient);

void BM_RunRound(benchmark::State& state) {
  const ExperimentConfig config;
  const auto suite = std::make_shared<const TaskSuite>(make_task_suite(config.suite, 1));
  auto exp = make_experiment(config, suite);
  std::size_t round = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_round(exp, 0, round++).chosen);
}
BENCHMARK(BM_RunRound);

}  // namespace

BENCHMARK_MAIN();
