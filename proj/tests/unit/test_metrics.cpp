#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "wcmtl/errors.hpp"
#include "wcmtl/metrics.hpp"
#include "wcmtl/rng.hpp"

using namespace wcmtl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const auto dir = fs::temp_directory_path() / "wcmtl_test_metrics";
  fs::create_directories(dir);
  return dir / name;
}

MetricsRecord rec(long epoch, EventKind ev, std::optional<TaskId> task, double value,
                  Extras extras = {}) {
  MetricsRecord r;
  r.epoch = epoch;
  r.event = ev;
  r.task = task;
  r.value = value;
  r.extras = std::move(extras);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("format and parse a record") {
  auto r = rec(3, EventKind::reward, 5, -2.0 / 3.0, {{"delta", 2}, {"queue_len", 17}, {"w\"x", 0.1}});
  r.round = 41;
  r.seq = 999;
  const auto line = format_record(r);
  CHECK(line == "3,41,999,reward,5,-0.66666666666666663,\"{\"\"delta\"\":2,\"\"queue_len\"\":17,"
                "\"\"w\\\"\"x\"\":0.10000000000000001}\"");
  CHECK(parse_record(line) == r);

  auto untasked = rec(0, EventKind::update, std::nullopt, 1.5);
  CHECK(format_record(untasked) == "0,0,0,update,,1.5,\"{}\"");
  CHECK(parse_record(format_record(untasked)) == untasked);

  CHECK_THROWS_AS(parse_record("0,0,0,bogus,,1,\"{}\""), IoError);
  CHECK_THROWS_AS(parse_record("0,0,0,push"), IoError);
  CHECK_THROWS_AS(parse_record("0,0,0,push,,1,{}"), IoError);
}

TEST_CASE("sink assigns monotone sequence numbers and rejects use after close") {
  MetricsSink sink;
  const auto a = sink.record(rec(0, EventKind::push, 0, 1.0));
  const auto b = sink.record(rec(0, EventKind::push, 1, 1.0));
  CHECK(a.seq == 0);
  CHECK(b.seq == 1);
  CHECK(sink.records().size() == 2);
  CHECK_THROWS_AS(sink.record(rec(0, EventKind::push, 0, std::nan(""))), NumericFault);
  sink.close();
  CHECK_FALSE(sink.is_open());
  CHECK_THROWS_AS(sink.record(rec(0, EventKind::push, 0, 1.0)), IoError);
}

TEST_CASE("file round trip reproduces the in-memory sequence") {
  const auto path = scratch("roundtrip.csv");
  std::vector<MetricsRecord> written;
  {
    MetricsSink sink(path, true);
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
      auto r = rec(i / 100, static_cast<EventKind>(rng.below(6)),
                   rng.uniform() < 0.8 ? std::optional<TaskId>(rng.below(8)) : std::nullopt,
                   (rng.uniform() - 0.5) * std::pow(10.0, 20 * rng.uniform() - 10));
      r.round = i % 100;
      for (int k = 0; k < static_cast<int>(rng.below(4)); ++k)
        r.extras.emplace_back("k" + std::to_string(k), rng.normal() * 1e-5);
      sink.record(r);
    }
    written = sink.records();
    sink.close();
  }
  CHECK(read_metrics(path) == written);
  const auto text = slurp(path);
  CHECK(text.rfind("epoch,round,seq,event,task,value,extras_json\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("flushed partial files parse") {
  const auto path = scratch("partial.csv");
  MetricsSink sink(path);
  sink.record(rec(0, EventKind::push, 0, 0.25));
  sink.flush();
  CHECK(read_metrics(path).size() == 1);
}

TEST_CASE("read_metrics rejects a wrong header") {
  const auto path = scratch("badheader.csv");
  std::ofstream(path) << "a,b,c\n";
  CHECK_THROWS_AS(read_metrics(path), IoError);
  CHECK_THROWS_AS(read_metrics(scratch("missing_file.csv")), IoError);
}

TEST_CASE("selection_trace per epoch frequency") {
  std::vector<MetricsRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(rec(0, EventKind::choose, 0, 1));
  for (int i = 0; i < 6; ++i) rs.push_back(rec(1, EventKind::choose, i % 2, 1));
  const auto t = selection_trace(rs, TraceNormalization::per_epoch_frequency, {100, 100, 100}, 8);
  REQUIRE(t.epochs == std::vector<long>{0, 1});
  CHECK(t.values[0] == std::vector<double>{1, 0, 0});
  CHECK(t.values[1] == std::vector<double>{0.5, 0.5, 0});
}

TEST_CASE("selection_trace rows sum to one") {
  Rng rng(2);
  std::vector<MetricsRecord> rs;
  for (long e = 0; e < 5; ++e)
    for (int i = 0; i < 1 + static_cast<int>(rng.below(300)); ++i)
      rs.push_back(rec(e, EventKind::choose, rng.below(7), 1));
  const auto t = selection_trace(rs, TraceNormalization::per_epoch_frequency,
                                 std::vector<std::size_t>(7, 10), 8);
  for (const auto& row : t.values) {
    double s = 0;
    for (double v : row) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("selection_trace per dataset size") {
  std::vector<MetricsRecord> rs;
  for (int i = 0; i < 100; ++i) rs.push_back(rec(0, EventKind::train, 1, 0.5));
  rs.push_back(rec(0, EventKind::choose, 1, 0.5));
  const auto t = selection_trace(rs, TraceNormalization::per_dataset_size, {500, 800}, 8);
  CHECK(t.values[0][0] == 0.0);
  CHECK(t.values[0][1] == 1.0);
}

TEST_CASE("loss_curves") {
  std::vector<MetricsRecord> rs;
  rs.push_back(rec(0, EventKind::eval, 0, 0.9));
  rs.push_back(rec(0, EventKind::eval, 1, 0.8));
  rs.push_back(rec(0, EventKind::train, 0, 0.2));
  rs.push_back(rec(0, EventKind::train, 0, 0.4));
  rs.push_back(rec(1, EventKind::train, 1, 0.7));
  rs.push_back(rec(1, EventKind::train, 1, 0.7));
  const auto t = loss_curves(rs, 3);
  REQUIRE(t.values.size() == 2);
  CHECK(t.values[0][0] == doctest::Approx(0.3));
  CHECK_FALSE(t.fallback[0][0]);
  CHECK(t.values[0][1] == 0.8);
  CHECK(t.fallback[0][1]);
  CHECK(std::isnan(t.values[0][2]));
  CHECK(t.fallback[0][2]);
  CHECK(t.values[1][0] == 0.9);
  CHECK(t.fallback[1][0]);
  CHECK(t.values[1][1] == 0.7);
}

TEST_CASE("dispersion") {
  CHECK(dispersion(std::vector<double>{0.4, 0.4, 0.4}) == 0.0);
  CHECK(dispersion(std::vector<double>{0.0, 2.0}) == 1.0);
  CHECK(dispersion(std::vector<double>{3, 1, 4, 1, 5}) ==
        dispersion(std::vector<double>{5, 4, 3, 1, 1}));
  CHECK_THROWS_AS(dispersion(std::vector<double>{1.0}), std::invalid_argument);

  TraceTable t;
  t.epochs = {0};
  t.values = {{0.0, 2.0}};
  t.fallback = {{false, false}};
  CHECK(dispersion(t, 0) == 1.0);
}

TEST_CASE("write_table") {
  TraceTable t;
  t.epochs = {0, 1};
  t.values = {{0.5, 0.25}, {1.0, 0.1}};
  t.fallback = {{false, true}, {false, false}};
  const auto path = scratch("table.csv");
  write_table(t, path);
  CHECK(slurp(path) ==
        "epoch,task,value,fallback\n0,0,0.5,0\n0,1,0.25,1\n1,0,1,0\n1,1,0.10000000000000001,0\n");
}
