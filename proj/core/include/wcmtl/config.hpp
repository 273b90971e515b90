#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wcmtl/tasks.hpp"
#include "wcmtl/trainer.hpp"

namespace wcmtl {

enum class SamplerKind { worst_case_bandit, uniform, size_proportional, sqrt_size, annealed_mix };

std::string_view to_string(SamplerKind kind);
SamplerKind sampler_from_string(std::string_view name);  // throws ConfigError

/// "anneal" or a real in [0, 1].
PhiSchedule phi_from_string(std::string_view text);  // throws ConfigError
std::string to_string(const PhiSchedule& phi);

struct Seeds {
  std::uint64_t sampler = 1;
  std::uint64_t trainer = 2;
  std::uint64_t env = 3;
  std::uint64_t model = 4;

  void set_all(std::uint64_t seed) { sampler = trainer = env = model = seed; }
};

struct TransferConfig {
  double alpha = 1.5;
  std::size_t n_train = 5000;
  std::size_t n_val = 500;
  std::size_t n_test = 1000;
  std::vector<double> fractions{0.01, 0.10};
  int repeats = 5;
  int finetune_epochs = 10;
  double finetune_lr = 0.05;
};

struct ExperimentConfig {
  SuiteRecipe suite;
  SamplerKind sampler = SamplerKind::worst_case_bandit;
  PhiSchedule phi = PhiSchedule::constant(0.5);
  double gamma = 0.001;
  std::optional<std::size_t> actions_per_round;  // k; defaults to 2n
  std::size_t capacity = 50;
  std::size_t batch_size = 8;
  int accumulation = 4;
  double learning_rate = 0.02;
  std::size_t epochs = 10;
  std::optional<std::size_t> rounds_per_epoch;  // defaults to ceil(sum N_i / (batch * k))
  std::vector<double> task_weights;              // v_i; empty means all 1
  std::size_t d_hid = 32;
  Seeds seeds;
  TransferConfig transfer;

  std::size_t k() const { return actions_per_round.value_or(2 * suite.n_tasks); }
  std::vector<double> v() const;
  void validate() const;  // throws ConfigError
};

/// JSON object; every key is optional and unknown keys are rejected.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config (defaults filled in) as pretty JSON.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace wcmtl
