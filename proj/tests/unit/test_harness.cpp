#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "oracles.hpp"
#include "test_support.hpp"
#include "wcmtl/checkpoint.hpp"
#include "wcmtl/errors.hpp"
#include "wcmtl/harness.hpp"

using namespace wcmtl;
using namespace wcmtl::testing;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const TaskSuite> small_suite() {
  static const auto suite = std::make_shared<const TaskSuite>(make_task_suite(small_recipe(), 3));
  return suite;
}

// Eight small tasks so k = 2n = 16 as in the default setting.
ExperimentConfig eight_task_config() {
  ExperimentConfig c = small_config();
  c.suite.n_tasks = 8;
  c.suite.regression_tasks = {3, 5};
  c.suite.scaled_task = 3;
  return c;
}

std::shared_ptr<const TaskSuite> eight_suite() {
  static const auto suite = std::make_shared<const TaskSuite>(make_task_suite(eight_task_config().suite, 3));
  return suite;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "wcmtl_test_harness" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run_round contract") {
  auto exp = make_experiment(eight_task_config(), eight_suite());
  MetricsSink sink;
  exp.sink = &sink;
  for (std::size_t round = 0; round < 30; ++round) {
    const auto out = run_round(exp, 0, round);
    CHECK(out.actions.size() == 16);
    CHECK(out.push_losses.size() == 16);
    CHECK(exp.buffer.size(out.chosen) == 0);
    CHECK(out.queue_lengths_after[out.chosen] == 0);
    if (round == 0) CHECK(out.refills.size() == 8);
    for (TaskId i = 0; i < 8; ++i) {
      CHECK(out.rewards.rewards[i].has_value() == (out.raw_pushes[i] > 0));
      CHECK(out.weights_after[i] > 0.0);
    }
  }
  CHECK(audit_round_log(sink.records(), 8, 16, 50).empty());
}

TEST_CASE("refill pushes never count toward rewards") {
  auto c = eight_task_config();
  c.capacity = 3;  // saturate queues quickly
  auto exp = make_experiment(c, eight_suite());
  MetricsSink sink;
  exp.sink = &sink;
  int saturated = 0;
  for (std::size_t round = 0; round < 60; ++round) {
    const auto out = run_round(exp, 0, round);
    for (TaskId i = 0; i < 8; ++i) saturated += out.raw_pushes[i] > 0 && out.deltas[i] < out.raw_pushes[i];
  }
  CHECK(saturated > 0);
  CHECK(audit_round_log(sink.records(), 8, 16, 3) == "");
}

TEST_CASE("first-round pushes under the uniform policy") {
  // 1000 fresh experiments; per-task push count is Binomial(16, 1/8) with
  // mean 2. Over 1000 rounds the mean's 3 sigma band is +-0.125.
  std::vector<double> total(8, 0.0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto c = eight_task_config();
    c.seeds.sampler = seed;
    auto exp = make_experiment(c, eight_suite());
    const auto out = run_round(exp, 0, 0);
    for (TaskId a : out.actions) total[a] += 1.0;
  }
  for (double t : total) CHECK(std::abs(t / 1000.0 - 2.0) <= 0.125);
}

TEST_CASE("env seed does not move the sampler's first-round draws") {
  auto a_cfg = eight_task_config();
  auto b_cfg = a_cfg;
  b_cfg.seeds.env = 77;
  auto a = make_experiment(a_cfg);
  auto b = make_experiment(b_cfg);
  CHECK(run_round(a, 0, 0).actions == run_round(b, 0, 0).actions);
}

TEST_CASE("default rounds per epoch") {
  CHECK(default_rounds_per_epoch({100, 200, 300}, 8, 6) == 13);
  CHECK(default_rounds_per_epoch({48}, 8, 6) == 1);
  auto c = small_config();
  c.rounds_per_epoch.reset();
  const auto sizes = small_suite()->train_sizes();
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  CHECK(rounds_per_epoch(c, *small_suite()) == (total + 63) / 64);
}

TEST_CASE("zero epochs log only the initial evaluation") {
  auto c = small_config();
  c.epochs = 0;
  const auto r = run_experiment(c, {}, small_suite());
  REQUIRE(r.records.size() == 4);
  for (const auto& rec : r.records) {
    CHECK(rec.event == EventKind::eval);
    CHECK(rec.epoch == 0);
    CHECK(rec.extra("initial") == 1.0);
  }
  CHECK(r.final_validation.size() == 4);
}

TEST_CASE("experiment files are byte-identical across runs") {
  const auto c = small_config();
  const auto a = run_experiment(c, scratch("a"), small_suite());
  const auto b = run_experiment(c, scratch("b"), small_suite());
  CHECK(slurp(a.metrics_path) == slurp(b.metrics_path));
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
  CHECK(slurp(a.config_path) == slurp(b.config_path));

  const auto records = read_metrics(a.metrics_path);
  CHECK(audit_round_log(records, 4, 8, 50).empty());
  // An initial eval block, then one eval block per epoch.
  long evals = 0;
  for (const auto& rec : records) evals += rec.event == EventKind::eval;
  CHECK(evals == 4 * 3);

  auto other = c;
  other.seeds.trainer = 99;
  const auto d = run_experiment(other, scratch("d"), small_suite());
  CHECK(slurp(a.metrics_path) != slurp(d.metrics_path));
}

TEST_CASE("epoch boundaries reset the weights and step phi") {
  auto c = small_config();
  c.phi = PhiSchedule::anneal(0.0, 1.0, 0.5);
  c.epochs = 3;
  const auto r = run_experiment(c, {}, small_suite());
  std::vector<double> phis(3, -1.0);
  for (const auto& rec : r.records) {
    if (rec.event == EventKind::choose) phis[static_cast<std::size_t>(rec.epoch)] = *rec.extra("phi");
    if (rec.event == EventKind::update && rec.round == 0) {
      // The policy logged in the first round of each epoch comes from reset weights.
      for (int i = 0; i < 4; ++i) CHECK(*rec.extra("p_" + std::to_string(i)) == doctest::Approx(0.25));
    }
  }
  CHECK(phis == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("a numeric fault leaves a parseable partial metrics file") {
  auto c = small_config();
  c.learning_rate = 1e300;
  const auto dir = scratch("fault");
  CHECK_THROWS_AS(run_experiment(c, dir, small_suite()), NumericFault);
  const auto records = read_metrics(dir / "metrics.csv");
  CHECK(records.size() >= 4);
}

TEST_CASE("checkpoint round trip") {
  auto exp = make_experiment(small_config(), small_suite());
  for (std::size_t round = 0; round < 5; ++round) run_round(exp, 0, round);
  const auto path = scratch("ckpt") / "checkpoint.json";
  fs::create_directories(path.parent_path());
  write_checkpoint(path, exp.model, exp.sampler, &exp.buffer);
  const auto back = read_checkpoint(path, small_suite().get());
  CHECK(back.model.flatten() == exp.model.flatten());
  CHECK(back.sampler.weights == exp.sampler.weights);
  CHECK(back.sampler.gamma == exp.sampler.gamma);
  REQUIRE(back.buffer);
  CHECK(back.buffer->lengths() == exp.buffer.lengths());
  for (TaskId t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < exp.buffer.size(t); ++j) {
      const auto& want = exp.buffer.queue(t)[j];
      const auto& got = back.buffer->queue(t)[j];
      CHECK(got.loss == want.loss);
      CHECK(got.refill == want.refill);
      CHECK(got.batch.inputs == want.batch.inputs);
    }
  CHECK_FALSE(read_checkpoint(path).buffer);
  CHECK_THROWS_AS(read_checkpoint(path.parent_path() / "nope.json"), IoError);
}

TEST_CASE("baseline probabilities") {
  for (double p : baseline_probabilities(SamplerKind::uniform, std::vector<std::size_t>(8, 10), 0, 5))
    CHECK(p == 0.125);
  const auto sq = baseline_probabilities(SamplerKind::sqrt_size, {100, 400}, 0, 1);
  CHECK(sq[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(sq[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const auto prop = baseline_probabilities(SamplerKind::size_proportional, {100, 300}, 0, 1);
  CHECK(prop == std::vector<double>{0.25, 0.75});
  CHECK(baseline_probabilities(SamplerKind::annealed_mix, {100, 300}, 0, 10) == prop);
  CHECK(baseline_probabilities(SamplerKind::annealed_mix, {100, 300}, 9, 10) ==
        std::vector<double>{0.5, 0.5});
  const auto mid = baseline_probabilities(SamplerKind::annealed_mix, {100, 300}, 3, 7);
  CHECK(mid[0] == doctest::Approx(0.375));
  CHECK_THROWS_AS(baseline_probabilities(SamplerKind::worst_case_bandit, {1, 2}, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("uniform baseline over identical tasks is uniform") {
  Rng rng(12, streams::kSampler);
  const std::vector<std::size_t> sizes(6, 1000);
  std::vector<long> counts(6, 0);
  for (int i = 0; i < 10000; ++i) ++counts[baseline_sampler_step(SamplerKind::uniform, sizes, 0, 1, rng)];
  CHECK(oracle::chi_square_p(counts, std::vector<double>(6, 1.0 / 6)) > 0.01);
}

TEST_CASE("baseline runs log one choose and one train per batch") {
  auto c = small_config();
  c.sampler = SamplerKind::size_proportional;
  c.epochs = 1;
  const auto r = run_experiment(c, {}, small_suite());
  long chooses = 0, trains = 0;
  for (const auto& rec : r.records) {
    chooses += rec.event == EventKind::choose;
    trains += rec.event == EventKind::train;
    CHECK(rec.event != EventKind::push);
  }
  CHECK(chooses == 20 * 8);
  CHECK(trains == 20 * 8);
}

TEST_CASE("zero-shot evaluation") {
  auto c = small_config();
  c.epochs = 3;
  const auto trained = run_experiment(c, {}, small_suite());
  const auto& suite = *small_suite();
  const auto flat = trained.model.flatten();
  Rng rng(13);
  for (const auto& task : suite.tasks) {
    const auto same = perturb_task(task, 0.0, rng);
    const auto zs = zero_shot_eval(trained.model, task.id, same);
    if (task.kind == TaskKind::classification) {
      CHECK(zs.metric >= 0.0);
      CHECK(zs.metric <= 1.0);
      // Same distribution, fresh draws: the accuracies differ by sampling
      // noise only; 3 sigma of the difference of two proportions.
      const auto own = evaluate(trained.model, task, SplitKind::test);
      const double p = 0.5 * (own.metric + zs.metric);
      const double sigma = std::sqrt(p * (1 - p) * 2.0 / static_cast<double>(task.test.size()));
      CHECK(std::abs(own.metric - zs.metric) <= 3 * sigma + 1e-12);
    }
  }
  CHECK(trained.model.flatten() == flat);

  TaskSpec wrong = suite.tasks[2];  // regression
  CHECK_THROWS_AS(zero_shot_eval(trained.model, 0, wrong), std::invalid_argument);
}

TEST_CASE("few-shot evaluation") {
  SuiteRecipe r = small_recipe();
  r.noise = 0.0;
  const auto suite = make_task_suite(r, 14);
  const auto shapes = suite.head_shapes();
  const TaskSpec& task = suite.tasks[0];

  // The teacher's own encoder with a blank head: head-only fine-tuning on a
  // noise-free task should recover near-teacher accuracy.
  auto model = teacher_as_model(task, 32, shapes);
  model.heads[0].weight.setZero();
  const auto flat = model.flatten();
  FewShotOptions opt{8, 40, 0.5, 1, true};
  const auto full = few_shot_eval(model, 0, task, 1.0, 1, opt);
  CHECK(evaluate(teacher_as_model(task, 32, shapes), task, SplitKind::test).metric == 1.0);
  CHECK(full.mean_metric >= 0.95);
  CHECK(model.flatten() == flat);

  opt.epochs = 2;
  const auto five = few_shot_eval(model, 0, task, 0.1, 5, opt);
  CHECK(five.repeats.size() == 5);
  CHECK(five.std_score >= 0.0);
  opt.vary_seed = false;
  const auto same = few_shot_eval(model, 0, task, 0.1, 5, opt);
  CHECK(same.std_score == 0.0);
  CHECK(same.std_metric == 0.0);

  CHECK_THROWS_AS(few_shot_eval(model, 0, task, 0.01, 5, opt), std::invalid_argument);
  CHECK_THROWS_AS(few_shot_eval(model, 2, task, 0.5, 5, opt), std::invalid_argument);
}

TEST_CASE("head fine-tuning leaves the encoder and other heads bit-exact") {
  Rng rng(15);
  const auto& suite = *small_suite();
  const auto model = init_model(16, 32, suite.head_shapes(), rng);
  const auto tuned = finetune_head(model, 1, suite.tasks[1], {8, 2, 0.1, 0, true}, rng);
  CHECK(tuned.encoder == model.encoder);
  CHECK(tuned.encoder_bias == model.encoder_bias);
  for (TaskId h : {TaskId{0}, TaskId{2}, TaskId{3}}) {
    CHECK(tuned.heads[h].weight == model.heads[h].weight);
    CHECK(tuned.heads[h].bias == model.heads[h].bias);
  }
  CHECK(tuned.heads[1].weight != model.heads[1].weight);
}

TEST_CASE("run_transfer emits one zero-shot and one row per fraction per task") {
  const auto c = small_config();
  Rng rng(16);
  const auto model = init_model(16, 32, small_suite()->head_shapes(), rng);
  const auto rows = run_transfer(model, c, *small_suite());
  REQUIRE(rows.size() == 4 * 3);
  CHECK(rows[0].setting == "zero-shot");
  CHECK(rows[1].fraction == 0.01);
  CHECK(rows[1].repeats == 5);
  CHECK(rows[2].fraction == 0.10);
}
