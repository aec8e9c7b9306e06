#include "chordmob/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "chordmob/error.hpp"

using namespace chordmob;
using namespace chordmob::harness;
using namespace std::chrono_literals;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_argument;  // sentinel: nothing thrown
}

void expect_closed(const std::vector<MetricsRow>& rows) {
  for (const auto& r : rows) {
    EXPECT_EQ(r.tally.succeeded + r.tally.failed + r.tally.timed_out, r.tally.issued) << r.node_count;
  }
}

ScenarioConfig small_churn() {
  ScenarioConfig c;
  c.experiment = Experiment::churn;
  c.node_counts = {80, 40};
  c.duration_ms = 40000;
  c.queries_per_point = 40;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
  ScenarioConfig c;
  c.experiment = Experiment::custom;
  c.node_counts = {30};
  c.loss_prob = 0.125;
  c.bundling = false;
  c.seed = 0xfeedfacecafeULL;
  c.churn_schedule.steps = {{5s, simnet::ChurnStep::Action::remove_nodes, 3, true},
                            {9s, simnet::ChurnStep::Action::add_nodes, 7, false}};
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_EQ(config_from_json(to_json(ScenarioConfig{})), ScenarioConfig{});
}

TEST(Config, RejectsUnknownFieldsAndBadTypes) {
  EXPECT_EQ(code_of([] { config_from_json(R"({"nodes": 4})"); }), Errc::config_invalid);
  EXPECT_EQ(code_of([] { config_from_json(R"({"m": "sixteen"})"); }), Errc::config_invalid);
  EXPECT_EQ(code_of([] { config_from_json(R"({"experiment": "warp"})"); }), Errc::config_invalid);
  EXPECT_EQ(code_of([] { config_from_json(R"({"churn_schedule": [{"at_ms": 1, "action": "add_nodes", "count": 1, "x": 0}]})"); }),
            Errc::config_invalid);
  EXPECT_EQ(code_of([] { config_from_json("{"); }), Errc::config_invalid);
  EXPECT_EQ(config_from_json("{}"), ScenarioConfig{});
}

TEST(Config, ValidateNamesTheField) {
  ScenarioConfig c;
  c.queries_per_point = 0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config_invalid);
    EXPECT_NE(std::string(e.what()).find("queries_per_point"), std::string::npos);
  }
  ScenarioConfig h;
  h.experiment = Experiment::handover;
  h.t_switch_ms = h.t_leave_overlap_ms;
  EXPECT_EQ(code_of([&] { h.validate(); }), Errc::config_invalid);
  EXPECT_EQ(code_of([] { load_config("/nonexistent/cfg.json"); }), Errc::io_error);
}

TEST(Sweep, ParallelMatchesSerial) {
  ScenarioConfig c;
  c.node_counts = {50, 100};
  c.seeds = 4;
  c.loss_prob = 0.02;
  c.stale_finger_fraction = 0.2;
  const auto serial = run_lookup_scaling(c, SweepMode::serial);
  const auto parallel = run_lookup_scaling(c, SweepMode::parallel);
  EXPECT_EQ(serial.rows, parallel.rows);
  EXPECT_TRUE(serial.calibrated_reconstruction);

  const auto cs = run_churn(small_churn(), SweepMode::serial);
  EXPECT_EQ(cs.rows, run_churn(small_churn(), SweepMode::parallel).rows);
}

TEST(Sweep, ErrorsPropagateFromWorkers) {
  std::vector<SweepPoint> points(8);
  for (int i = 0; i < 8; ++i) points[i].replica = i;
  auto fn = [](const SweepPoint& p) -> std::vector<Tally> {
    if (p.replica == 5) throw Error(Errc::invalid_argument, "boom");
    return {};
  };
  EXPECT_THROW(run_points(points, fn, SweepMode::parallel), Error);
}

TEST(Lookup, LosslessStableRingAnswersEverything) {
  ScenarioConfig c;
  const auto res = run_lookup_scaling(c);
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.tally.issued, 25u);
    EXPECT_EQ(r.success_pct(), 100.0);
    EXPECT_GT(r.mean_hops(), 0.0);
  }
  EXPECT_FALSE(res.calibrated_reconstruction);
}

TEST(Lookup, MultipleValuesPerKey) {
  ScenarioConfig c;
  c.node_counts = {64};
  for (int v = 1; v <= 4; ++v) {
    c.values_per_key = v;
    EXPECT_EQ(run_lookup_scaling(c).rows.front().success_pct(), 100.0);
  }
}

TEST(Lookup, AccountingClosesUnderLoss) {
  ScenarioConfig c;
  c.loss_prob = 0.3;
  c.stale_finger_fraction = 0.5;
  c.seeds = 3;
  const auto res = run_lookup_scaling(c);
  expect_closed(res.rows);
  EXPECT_EQ(res.rows.front().tally.issued, 75u);
}

TEST(Lookup, RerunGivesIdenticalCounts) {
  ScenarioConfig c;
  c.loss_prob = 0.05;
  EXPECT_EQ(run_lookup_scaling(c).rows, run_lookup_scaling(c).rows);
  ScenarioConfig other = c;
  other.seed = 2;
  EXPECT_NE(lookup_point(c, 200, 0), lookup_point(other, 200, 0));
}

TEST(Churn, GracefulRemovalLosesNothing) {
  auto c = small_churn();
  c.graceful_removal = true;
  const auto res = run_churn(c);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[0].node_count, 80);
  EXPECT_EQ(res.rows[1].node_count, 40);
  for (const auto& r : res.rows) EXPECT_EQ(r.success_pct(), 100.0);
}

TEST(Churn, ShortSuccessorListsDegrade) {
  auto c = small_churn();
  const auto robust = run_churn(c);
  c.successor_list_length = 1;
  c.stabilization = false;
  const auto fragile = run_churn(c);
  expect_closed(robust.rows);
  expect_closed(fragile.rows);
  const auto& a = robust.rows.back();
  const auto& b = fragile.rows.back();
  std::printf("after removal: r=4 %.1f%%, r=1 without stabilization %.1f%%\n", a.success_pct(), b.success_pct());
  EXPECT_LE(b.success_pct(), a.success_pct());
}

TEST(Custom, ScheduleWithArrivals) {
  ScenarioConfig c;
  c.experiment = Experiment::custom;
  c.node_counts = {40};
  c.duration_ms = 30000;
  c.churn_schedule.steps = {{10s, simnet::ChurnStep::Action::add_nodes, 20, false},
                            {20s, simnet::ChurnStep::Action::remove_nodes, 10, true}};
  const auto res = run_custom(c);
  ASSERT_EQ(res.rows.size(), 3u);
  EXPECT_EQ(res.rows[1].node_count, 60);
  EXPECT_EQ(res.rows[2].node_count, 50);
  expect_closed(res.rows);
  EXPECT_EQ(res.rows[0].success_pct(), 100.0);
  // Arrivals misroute until stabilization catches up with them.
  EXPECT_GE(res.rows[1].success_pct(), 70.0);
  EXPECT_EQ(res.rows[2].success_pct(), 100.0);
}

TEST(Handover, LosslessBundledRun) {
  ScenarioConfig c;
  c.experiment = Experiment::handover;
  c.node_counts = {20};
  const auto res = run(c);
  ASSERT_TRUE(res.handover);
  const auto& h = *res.handover;
  EXPECT_TRUE(h.report.completed);
  EXPECT_NEAR(h.report.measured_latency.count(), 50, 1);
  EXPECT_EQ(h.report.lost_bytes, 0u);
  EXPECT_EQ(h.bytes_delivered, h.bytes_sent);
  EXPECT_EQ(h.location_phases, (std::vector<std::string>{"enter-overlap", "switch-primary", "leave-overlap"}));
  ASSERT_EQ(res.series.size(), 601u);
  for (std::size_t i = 1; i < res.series.size(); ++i) EXPECT_LE(res.series[i - 1].bytes_delivered, res.series[i].bytes_delivered);
  EXPECT_EQ(res.rows.front().success_pct(), 100.0);
}

TEST(Handover, UnbundledMatchesThreeRoundTrips) {
  ScenarioConfig c;
  c.experiment = Experiment::handover;
  c.node_counts = {20};
  c.bundling = false;
  const auto h = *run(c).handover;
  EXPECT_NEAR(h.report.measured_latency.count(), 3 * (10 + 10) + 50, 1);
}

TEST(Handover, ZeroDurationIsEmpty) {
  ScenarioConfig c;
  c.experiment = Experiment::handover;
  c.duration_ms = 0;
  c.t_enter_overlap_ms = 1;
  c.t_switch_ms = 2;
  c.t_leave_overlap_ms = 3;
  const auto res = run(c);
  EXPECT_TRUE(res.series.empty());
  EXPECT_TRUE(res.trace.records().empty());
  EXPECT_EQ(res.handover->bytes_sent, 0u);
  EXPECT_EQ(res.rows.front().tally.issued, 0u);
}

TEST(Report, WritesDocumentedFilesIdentically) {
  ScenarioConfig c;
  c.experiment = Experiment::handover;
  c.node_counts = {10};
  c.loss_prob = 0.01;
  const auto dir = std::filesystem::temp_directory_path() / "chordmob_report_test";
  std::filesystem::remove_all(dir);
  emit_report(run(c), dir / "a");
  emit_report(run(c), dir / "b");
  for (const char* f : {"metrics.csv", "timeseries.csv", "chunk_trace.csv", "run.json"}) {
    const auto a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  const auto metrics = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);
  const auto series = slurp(dir / "a" / "timeseries.csv");
  EXPECT_EQ(series.substr(0, series.find('\n')), kSeriesHeader);
  const auto trace = slurp(dir / "a" / "chunk_trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), msctp::ChunkTrace::kHeader);
  std::filesystem::remove_all(dir);
}

TEST(Report, UnwritablePathIsIoError) {
  RunResult r;
  EXPECT_EQ(code_of([&] { emit_report(r, "/proc/chordmob/out"); }), Errc::io_error);
}
