#pragma once

// Scenario runner for the three experiments (handover, lookup scaling, churn)
// plus a free-form churn schedule, and the CSV / JSON reports they produce.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chordmob/msctp.hpp"
#include "chordmob/simnet.hpp"

namespace chordmob::harness {

using simnet::SimTime;

enum class Experiment { handover, lookup_scaling, churn, custom };
std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view name);  // throws config-invalid

struct ScenarioConfig {
  Experiment experiment = Experiment::lookup_scaling;
  unsigned m = 16;
  std::vector<int> node_counts{100, 200, 300, 400};
  int queries_per_point = 25;
  int values_per_key = 1;
  std::uint64_t seed = 1;
  int seeds = 1;  // replicas aggregated into each row

  std::int64_t link_latency_ms = 10;
  double loss_prob = 0.0;
  std::int64_t rpc_timeout_ms = 500;
  int successor_list_length = 4;
  bool stabilization = true;
  std::int64_t stabilize_interval_ms = 1000;
  double stale_finger_fraction = 0.0;
  std::int64_t query_deadline_ms = 5000;

  std::int64_t record_ttl_ms = 30000;
  std::int64_t pointer_ttl_ms = 15000;
  std::int64_t redirect_ttl_ms = 30000;
  std::int64_t refresh_period_ms = 10000;

  std::int64_t t_md_ms = 0;
  std::int64_t t_ac_ms = 0;
  std::int64_t t_mn_cn_ms = 10;
  std::int64_t t_cn_mn_ms = 10;
  std::int64_t t_pc_ms = 50;
  bool bundling = true;

  std::int64_t duration_ms = 60000;
  std::int64_t t_enter_overlap_ms = 25000;
  std::int64_t t_switch_ms = 30000;
  std::int64_t t_leave_overlap_ms = 35000;
  int chunk_bytes = 1000;
  std::int64_t send_interval_ms = 10;
  std::int64_t sample_interval_ms = 100;

  bool graceful_removal = false;
  simnet::ChurnSchedule churn_schedule;

  // Throws config-invalid naming the offending field.
  void validate() const;
  msctp::LatencyModel latency_model() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// JSON form. Unknown fields and wrong types are config-invalid; absent
// fields keep their defaults.
std::string to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);  // io-error / config-invalid

// Integer tallies so that aggregation order never changes the result.
struct Tally {
  std::uint64_t issued = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t timed_out = 0;
  std::uint64_t failed = 0;
  std::uint64_t hop_sum = 0;        // over succeeded queries
  std::uint64_t latency_sum_ms = 0; // over succeeded queries

  Tally& operator+=(const Tally& o);
  friend bool operator==(const Tally&, const Tally&) = default;
};

struct MetricsRow {
  std::string experiment;
  int node_count = 0;
  Tally tally;

  double success_pct() const;
  double mean_hops() const;
  double mean_latency_ms() const;
  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct Sample {
  SimTime at{0};
  std::uint64_t bytes_delivered = 0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct HandoverOutcome {
  msctp::HandoverReport report;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_delivered = 0;
  std::vector<std::string> location_phases;  // handover_update phases in the order applied
};

struct RunResult {
  ScenarioConfig config;
  std::vector<MetricsRow> rows;
  std::vector<Sample> series;
  msctp::ChunkTrace trace;
  std::optional<HandoverOutcome> handover;
  bool calibrated_reconstruction = false;
};

enum class SweepMode { serial, parallel };

// One independent simulation: experiment point (N or ladder) and replica.
struct SweepPoint {
  int node_count = 0;
  int replica = 0;
};

// Runs fn over every point, with OpenMP or in a plain loop. Results come back
// in input order either way.
std::vector<std::vector<Tally>> run_points(const std::vector<SweepPoint>& points,
                                           const std::function<std::vector<Tally>(const SweepPoint&)>& fn,
                                           SweepMode mode);

// Single replicas, exposed for tests and benchmarks.
Tally lookup_point(const ScenarioConfig& cfg, int node_count, int replica);
// One Tally per population segment.
std::vector<Tally> churn_replica(const ScenarioConfig& cfg, int replica);

RunResult run_handover(const ScenarioConfig& cfg);
RunResult run_lookup_scaling(const ScenarioConfig& cfg, SweepMode mode = SweepMode::parallel);
RunResult run_churn(const ScenarioConfig& cfg, SweepMode mode = SweepMode::parallel);
RunResult run_custom(const ScenarioConfig& cfg, SweepMode mode = SweepMode::parallel);
RunResult run(const ScenarioConfig& cfg, SweepMode mode = SweepMode::parallel);

inline constexpr const char* kMetricsHeader =
    "experiment,node_count,queries_issued,queries_succeeded,queries_timed_out,success_pct,mean_hops,mean_latency_ms";
inline constexpr const char* kSeriesHeader = "sim_time_ms,bytes_delivered";

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string series_csv(const std::vector<Sample>& series);
std::string trace_csv(const msctp::ChunkTrace& trace);
std::string run_json(const RunResult& result);

// Writes metrics.csv, timeseries.csv, chunk_trace.csv and run.json under dir
// (created if missing). Throws io-error.
void emit_report(const RunResult& result, const std::filesystem::path& dir);

}  // namespace chordmob::harness
