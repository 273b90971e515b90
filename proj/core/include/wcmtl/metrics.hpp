#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wcmtl/types.hpp"

namespace wcmtl {

enum class EventKind { push, choose, train, reward, update, eval };

std::string_view to_string(EventKind kind);
EventKind event_from_string(std::string_view name);

/// Flat key/value extras, kept in insertion order.
using Extras = std::vector<std::pair<std::string, double>>;

struct MetricsRecord {
  long epoch = 0;
  long round = 0;
  std::uint64_t seq = 0;
  EventKind event = EventKind::push;
  std::optional<TaskId> task;
  double value = 0.0;
  Extras extras;

  std::optional<double> extra(std::string_view key) const;
  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr std::string_view kMetricsHeader = "epoch,round,seq,event,task,value,extras_json";

/// %.17g, the formatting used for every real in metrics and export files.
std::string format_real(double value);
std::string format_record(const MetricsRecord& rec);
MetricsRecord parse_record(std::string_view line);

/// Append-only sink. Sequence numbers are assigned on record(). A sink
/// created without a path only keeps records in memory.
class MetricsSink {
 public:
  MetricsSink();
  explicit MetricsSink(const std::filesystem::path& path, bool keep_in_memory = false);

  MetricsSink(const MetricsSink&) = delete;
  MetricsSink& operator=(const MetricsSink&) = delete;
  MetricsSink(MetricsSink&&) = default;
  MetricsSink& operator=(MetricsSink&&) = default;

  /// Throws IoError when closed or on write failure, NumericFault on a
  /// non-finite value.
  const MetricsRecord& record(MetricsRecord rec);
  void flush();
  void close();
  bool is_open() const { return open_; }

  std::uint64_t next_seq() const { return next_seq_; }
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::optional<std::ofstream> file_;
  bool keep_ = true;
  bool open_ = true;
  std::uint64_t next_seq_ = 0;
  std::vector<MetricsRecord> records_;
  MetricsRecord last_;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// epoch x task table. `fallback` marks cells that were filled from an
/// evaluation record rather than training events.
struct TraceTable {
  std::vector<long> epochs;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> fallback;

  std::size_t n_tasks() const { return values.empty() ? 0 : values.front().size(); }
};

enum class TraceNormalization { per_epoch_frequency, per_dataset_size };

/// per_epoch_frequency: share of choose events per task in each epoch.
/// per_dataset_size: train events * batch_size / N_i.
TraceTable selection_trace(const std::vector<MetricsRecord>& records, TraceNormalization norm,
                           const std::vector<std::size_t>& train_sizes, std::size_t batch_size);

/// Mean fresh training loss per task and epoch; tasks not trained in an
/// epoch take their latest eval loss and are flagged.
TraceTable loss_curves(const std::vector<MetricsRecord>& records, std::size_t n_tasks);

/// Population standard deviation across tasks of row `row` of the table.
double dispersion(const TraceTable& table, std::size_t row);
double dispersion(std::span<const double> values);

/// CSV with header epoch,task,value,fallback.
void write_table(const TraceTable& table, const std::filesystem::path& path);

}  // namespace wcmtl
