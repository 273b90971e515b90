// wcmtl: run, sweep, transfer and export for worst-case-aware multi-task
// curriculum experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wcmtl/checkpoint.hpp"
#include "wcmtl/config.hpp"
#include "wcmtl/errors.hpp"
#include "wcmtl/harness.hpp"
#include "wcmtl/metrics.hpp"

namespace fs = std::filesystem;
using namespace wcmtl;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kNumericFault = 2, kIoError = 3 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string phi;
  std::string sampler;
  std::string out = "out";
  std::optional<std::size_t> epochs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", f.seed, "Set every seed (sampler, trainer, env, model)");
  cmd->add_option("--phi", f.phi, "Phi: a number in [0,1] or 'anneal'");
  cmd->add_option("--sampler", f.sampler,
                  "worst-case-bandit | uniform | size-proportional | sqrt-size | annealed-mix");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--epochs", f.epochs, "Number of epochs");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : load_config(f.config_path);
  if (f.seed) c.seeds.set_all(*f.seed);
  if (!f.phi.empty()) c.phi = phi_from_string(f.phi);
  if (!f.sampler.empty()) c.sampler = sampler_from_string(f.sampler);
  if (f.epochs) c.epochs = *f.epochs;
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RunSummary {
  double worst_val_loss = 0.0;
  double mean_val_loss = 0.0;
  double final_dispersion = 0.0;
};

RunSummary summarize(const ExperimentResult& r, const std::vector<MetricsRecord>& records) {
  RunSummary s;
  double total = 0.0;
  for (const auto& m : r.final_validation) {
    s.worst_val_loss = std::max(s.worst_val_loss, m.mean_loss);
    total += m.mean_loss;
  }
  s.mean_val_loss = total / static_cast<double>(r.final_validation.size());
  const TraceTable curves = loss_curves(records, r.suite->size());
  s.final_dispersion = dispersion(curves, curves.epochs.size() - 1);
  return s;
}

int cmd_run(const CommonFlags& f) {
  const ExperimentConfig config = resolve(f);
  const ExperimentResult r = run_experiment(config, f.out);
  const RunSummary s = summarize(r, read_metrics(r.metrics_path));
  std::cout << "metrics:    " << r.metrics_path.string() << "\n"
            << "checkpoint: " << r.checkpoint_path.string() << "\n"
            << "worst validation loss " << format_real(s.worst_val_loss) << ", mean "
            << format_real(s.mean_val_loss) << ", final-epoch dispersion "
            << format_real(s.final_dispersion) << "\n";
  return kOk;
}

int cmd_sweep(const CommonFlags& f, const std::string& phis, const std::string& samplers,
              const std::string& seeds, unsigned jobs) {
  const ExperimentConfig base = resolve(f);
  struct Cell {
    ExperimentConfig config;
    fs::path dir;
    std::string phi, sampler;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  const auto phi_list = phis.empty() ? std::vector<std::string>{to_string(base.phi)} : split_list(phis);
  const auto sampler_list =
      samplers.empty() ? std::vector<std::string>{std::string(to_string(base.sampler))} : split_list(samplers);
  const auto seed_list = seeds.empty() ? std::vector<std::string>{std::to_string(base.seeds.sampler)}
                                       : split_list(seeds);
  for (const auto& sampler : sampler_list)
    for (const auto& phi : phi_list) {
      // phi only matters for the bandit; baselines get one cell per seed.
      if (sampler != "worst-case-bandit" && phi != phi_list.front()) continue;
      for (const auto& seed_text : seed_list) {
        Cell c{base, {}, phi, sampler, std::stoull(seed_text)};
        c.config.sampler = sampler_from_string(sampler);
        c.config.phi = phi_from_string(phi);
        c.config.seeds.set_all(c.seed);
        c.config.validate();
        c.dir = fs::path(f.out) / (sampler + "_phi-" + phi + "_seed-" + seed_text);
        cells.push_back(std::move(c));
      }
    }

  std::vector<RunSummary> summaries(cells.size());
  auto run_cell = [&](std::size_t i) {
    const ExperimentResult r = run_experiment(cells[i].config, cells[i].dir);
    summaries[i] = summarize(r, read_metrics(r.metrics_path));
  };
  jobs = std::max(1u, jobs);
  for (std::size_t start = 0; start < cells.size(); start += jobs) {
    std::vector<std::future<void>> pending;
    for (std::size_t i = start; i < std::min(cells.size(), start + jobs); ++i)
      pending.push_back(std::async(std::launch::async, run_cell, i));
    for (auto& p : pending) p.get();
  }

  fs::create_directories(f.out);
  const fs::path summary = fs::path(f.out) / "summary.csv";
  std::ofstream out(summary, std::ios::binary);
  out << "sampler,phi,seed,worst_val_loss,mean_val_loss,final_dispersion\n";
  for (std::size_t i = 0; i < cells.size(); ++i)
    out << cells[i].sampler << ',' << (cells[i].sampler == "worst-case-bandit" ? cells[i].phi : "")
        << ',' << cells[i].seed << ',' << format_real(summaries[i].worst_val_loss) << ','
        << format_real(summaries[i].mean_val_loss) << ',' << format_real(summaries[i].final_dispersion)
        << '\n';
  if (!out) throw IoError("cannot write " + summary.string());
  std::cout << "ran " << cells.size() << " experiments; summary: " << summary.string() << "\n";
  return kOk;
}

int cmd_transfer(const CommonFlags& f, const std::string& checkpoint_path) {
  const ExperimentConfig config = resolve(f);
  const TaskSuite suite = make_task_suite(config.suite, config.seeds.env);
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  if (ckpt.model.n_heads() != suite.size())
    throw ConfigError("checkpoint head count does not match the configured suite");
  const auto rows = run_transfer(ckpt.model, config, suite);
  fs::create_directories(f.out);
  const fs::path path = fs::path(f.out) / "transfer.csv";
  write_transfer_rows(rows, path);
  std::cout << "transfer table: " << path.string() << "\n";
  return kOk;
}

int cmd_export(const std::string& run_dir, const std::string& out_dir) {
  const fs::path dir(run_dir);
  std::ifstream echo_in(dir / "config_echo.json", std::ios::binary);
  if (!echo_in) throw IoError("cannot open " + (dir / "config_echo.json").string());
  nlohmann::json echo;
  try {
    echo = nlohmann::json::parse(echo_in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad config_echo.json: ") + e.what());
  }
  const auto sizes = echo.at("train_sizes").get<std::vector<std::size_t>>();
  const auto batch = echo.at("config").at("batch_size").get<std::size_t>();
  const auto records = read_metrics(dir / "metrics.csv");

  const fs::path out = out_dir.empty() ? dir : fs::path(out_dir);
  fs::create_directories(out);
  write_table(selection_trace(records, TraceNormalization::per_epoch_frequency, sizes, batch),
              out / "selection_frequency.csv");
  write_table(selection_trace(records, TraceNormalization::per_dataset_size, sizes, batch),
              out / "selection_per_size.csv");
  const TraceTable curves = loss_curves(records, sizes.size());
  write_table(curves, out / "loss_curves.csv");

  std::ofstream disp(out / "dispersion.csv", std::ios::binary);
  disp << "epoch,value\n";
  for (std::size_t row = 0; row < curves.epochs.size(); ++row)
    disp << curves.epochs[row] << ',' << format_real(dispersion(curves, row)) << '\n';
  if (!disp) throw IoError("cannot write dispersion.csv");
  std::cout << "exported traces to " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Worst-case-aware multi-task curriculum learning simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags, transfer_flags;
  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run, run_flags);

  auto* sweep = app.add_subcommand("sweep", "Grid over phi, sampler and seed");
  add_common(sweep, sweep_flags);
  std::string phis, samplers, seeds;
  unsigned jobs = 1;
  sweep->add_option("--phis", phis, "Comma-separated phi values, e.g. 0,0.5,1,anneal");
  sweep->add_option("--samplers", samplers, "Comma-separated sampler kinds");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--jobs", jobs, "Experiments to run concurrently");

  auto* transfer = app.add_subcommand("transfer", "Zero-/few-shot evaluation from a checkpoint");
  add_common(transfer, transfer_flags);
  std::string checkpoint;
  transfer->add_option("--checkpoint", checkpoint, "checkpoint.json written by run")->required();

  auto* exp = app.add_subcommand("export", "Derive selection and loss-curve tables from metrics");
  std::string run_dir, export_out;
  exp->add_option("--run", run_dir, "Directory holding metrics.csv and config_echo.json")->required();
  exp->add_option("--out", export_out, "Output directory (defaults to --run)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*sweep) return cmd_sweep(sweep_flags, phis, samplers, seeds, jobs);
    if (*transfer) return cmd_transfer(transfer_flags, checkpoint);
    if (*exp) return cmd_export(run_dir, export_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return kNumericFault;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericFault;
  }
  return kOk;
}
