#include "wcmtl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "wcmtl/errors.hpp"

namespace wcmtl {

namespace {

constexpr std::string_view kEventNames[] = {"push", "choose", "train", "reward", "update", "eval"};

long parse_long(std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw IoError("metrics: bad integer field '" + s + "'");
  return v;
}

double parse_real(std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw IoError("metrics: bad real field '" + s + "'");
  return v;
}

std::string extras_json(const Extras& extras) {
  std::string out = "{";
  for (std::size_t i = 0; i < extras.size(); ++i) {
    if (i) out += ',';
    out += nlohmann::json(extras[i].first).dump();
    out += ':';
    out += format_real(extras[i].second);
  }
  out += '}';
  return out;
}

}  // namespace

std::string_view to_string(EventKind kind) { return kEventNames[static_cast<int>(kind)]; }

EventKind event_from_string(std::string_view name) {
  for (int i = 0; i < 6; ++i)
    if (kEventNames[i] == name) return static_cast<EventKind>(i);
  throw IoError("metrics: unknown event '" + std::string(name) + "'");
}

std::optional<double> MetricsRecord::extra(std::string_view key) const {
  for (const auto& [k, v] : extras)
    if (k == key) return v;
  return std::nullopt;
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string format_record(const MetricsRecord& rec) {
  std::string line = std::to_string(rec.epoch) + ',' + std::to_string(rec.round) + ',' +
                     std::to_string(rec.seq) + ',' + std::string(to_string(rec.event)) + ',';
  if (rec.task) line += std::to_string(*rec.task);
  line += ',' + format_real(rec.value) + ',';
  // The JSON field is always quoted; embedded quotes are doubled.
  line += '"';
  for (char c : extras_json(rec.extras)) {
    if (c == '"') line += '"';
    line += c;
  }
  line += '"';
  return line;
}

MetricsRecord parse_record(std::string_view line) {
  std::string_view fields[6];
  std::size_t at = 0;
  for (auto& f : fields) {
    const std::size_t comma = line.find(',', at);
    if (comma == std::string_view::npos) throw IoError("metrics: too few fields");
    f = line.substr(at, comma - at);
    at = comma + 1;
  }
  std::string_view quoted = line.substr(at);
  if (quoted.size() < 2 || quoted.front() != '"' || quoted.back() != '"')
    throw IoError("metrics: extras field must be quoted");
  std::string json;
  quoted = quoted.substr(1, quoted.size() - 2);
  for (std::size_t i = 0; i < quoted.size(); ++i) {
    json += quoted[i];
    if (quoted[i] == '"') {
      if (i + 1 >= quoted.size() || quoted[i + 1] != '"') throw IoError("metrics: bad quote escape");
      ++i;
    }
  }

  MetricsRecord rec;
  rec.epoch = parse_long(fields[0]);
  rec.round = parse_long(fields[1]);
  rec.seq = static_cast<std::uint64_t>(parse_long(fields[2]));
  rec.event = event_from_string(fields[3]);
  if (!fields[4].empty()) rec.task = static_cast<TaskId>(parse_long(fields[4]));
  rec.value = parse_real(fields[5]);
  try {
    const auto parsed = nlohmann::ordered_json::parse(json);
    if (!parsed.is_object()) throw IoError("metrics: extras must be a JSON object");
    for (const auto& [k, v] : parsed.items()) {
      if (!v.is_number()) throw IoError("metrics: extras values must be numbers");
      rec.extras.emplace_back(k, v.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("metrics: bad extras JSON: ") + e.what());
  }
  return rec;
}

MetricsSink::MetricsSink() = default;

MetricsSink::MetricsSink(const std::filesystem::path& path, bool keep_in_memory)
    : keep_(keep_in_memory) {
  file_.emplace(path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!*file_) throw IoError("cannot open metrics file " + path.string());
  *file_ << kMetricsHeader << '\n';
}

const MetricsRecord& MetricsSink::record(MetricsRecord rec) {
  if (!open_) throw IoError("metrics sink is closed");
  if (!std::isfinite(rec.value)) throw NumericFault("metrics: non-finite value");
  for (const auto& [k, v] : rec.extras)
    if (!std::isfinite(v)) throw NumericFault("metrics: non-finite extra '" + k + "'");
  rec.seq = next_seq_++;
  if (file_) {
    *file_ << format_record(rec) << '\n';
    if (!*file_) throw IoError("metrics: write failed");
  }
  if (keep_) {
    records_.push_back(std::move(rec));
    return records_.back();
  }
  last_ = std::move(rec);
  return last_;
}

void MetricsSink::flush() {
  if (file_ && open_) {
    file_->flush();
    if (!*file_) throw IoError("metrics: flush failed");
  }
}

void MetricsSink::close() {
  if (!open_) return;
  flush();
  if (file_) file_->close();
  open_ = false;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw IoError("metrics: missing or unexpected header in " + path.string());
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

namespace {

std::vector<long> epochs_of(const std::vector<MetricsRecord>& records) {
  std::vector<long> epochs;
  for (const auto& r : records)
    if (epochs.empty() || epochs.back() != r.epoch) {
      if (!epochs.empty() && r.epoch < epochs.back())
        throw std::invalid_argument("metrics records are not ordered by epoch");
      epochs.push_back(r.epoch);
    }
  return epochs;
}

TraceTable empty_table(const std::vector<long>& epochs, std::size_t n_tasks) {
  TraceTable t;
  t.epochs = epochs;
  t.values.assign(epochs.size(), std::vector<double>(n_tasks, 0.0));
  t.fallback.assign(epochs.size(), std::vector<bool>(n_tasks, false));
  return t;
}

}  // namespace

TraceTable selection_trace(const std::vector<MetricsRecord>& records, TraceNormalization norm,
                           const std::vector<std::size_t>& train_sizes, std::size_t batch_size) {
  const std::size_t n = train_sizes.size();
  const auto epochs = epochs_of(records);
  TraceTable table = empty_table(epochs, n);
  const EventKind counted =
      norm == TraceNormalization::per_epoch_frequency ? EventKind::choose : EventKind::train;

  std::size_t row = 0;
  for (const auto& r : records) {
    while (table.epochs[row] != r.epoch) ++row;
    if (r.event == counted && r.task && *r.task < n) table.values[row][*r.task] += 1.0;
  }
  for (auto& values : table.values) {
    if (norm == TraceNormalization::per_epoch_frequency) {
      double total = 0.0;
      for (double v : values) total += v;
      if (total > 0.0)
        for (double& v : values) v /= total;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        values[i] = values[i] * static_cast<double>(batch_size) / static_cast<double>(train_sizes[i]);
    }
  }
  return table;
}

TraceTable loss_curves(const std::vector<MetricsRecord>& records, std::size_t n_tasks) {
  const auto epochs = epochs_of(records);
  TraceTable table = empty_table(epochs, n_tasks);
  std::vector<double> sum(n_tasks), latest_eval(n_tasks, std::nan(""));
  std::vector<std::size_t> count(n_tasks);

  auto finish = [&](std::size_t row) {
    for (std::size_t i = 0; i < n_tasks; ++i) {
      if (count[i] > 0) {
        table.values[row][i] = sum[i] / static_cast<double>(count[i]);
      } else {
        table.values[row][i] = latest_eval[i];
        table.fallback[row][i] = true;
      }
    }
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
  };

  std::size_t row = 0;
  for (const auto& r : records) {
    while (table.epochs[row] != r.epoch) finish(row++);
    if (!r.task || *r.task >= n_tasks) continue;
    if (r.event == EventKind::train) {
      sum[*r.task] += r.value;
      ++count[*r.task];
    } else if (r.event == EventKind::eval) {
      latest_eval[*r.task] = r.value;
    }
  }
  if (!epochs.empty()) finish(row);
  return table;
}

double dispersion(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("dispersion: need at least two tasks");
  // Shifted by the first value so identical inputs give exactly zero.
  const double shift = values.front();
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - shift - mean) * (v - shift - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

double dispersion(const TraceTable& table, std::size_t row) {
  return dispersion(table.values.at(row));
}

void write_table(const TraceTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "epoch,task,value,fallback\n";
  for (std::size_t row = 0; row < table.epochs.size(); ++row)
    for (std::size_t i = 0; i < table.values[row].size(); ++i)
      out << table.epochs[row] << ',' << i << ',' << format_real(table.values[row][i]) << ','
          << (table.fallback[row][i] ? 1 : 0) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace wcmtl
