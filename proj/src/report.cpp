#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "chordmob/error.hpp"
#include "chordmob/harness.hpp"
#include "json.hpp"

namespace chordmob::harness {

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{:.2f},{:.3f},{:.3f}\n", r.experiment, r.node_count, r.tally.issued,
                       r.tally.succeeded, r.tally.timed_out, r.success_pct(), r.mean_hops(), r.mean_latency_ms());
  }
  return out;
}

std::string series_csv(const std::vector<Sample>& series) {
  std::string out = std::string(kSeriesHeader) + "\n";
  for (const auto& s : series) out += fmt::format("{},{}\n", s.at.count(), s.bytes_delivered);
  return out;
}

std::string trace_csv(const msctp::ChunkTrace& trace) {
  std::ostringstream out;
  trace.write_csv(out);
  return out.str();
}

std::string run_json(const RunResult& result) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["config"] = nlohmann::json::parse(to_json(result.config));
  j["calibrated_reconstruction"] = result.calibrated_reconstruction;
  ordered_json rows = ordered_json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"experiment", r.experiment},
                    {"node_count", r.node_count},
                    {"queries_issued", r.tally.issued},
                    {"queries_succeeded", r.tally.succeeded},
                    {"queries_timed_out", r.tally.timed_out},
                    {"queries_failed", r.tally.failed},
                    {"success_pct", r.success_pct()},
                    {"mean_hops", r.mean_hops()},
                    {"mean_latency_ms", r.mean_latency_ms()}});
  }
  j["rows"] = rows;
  if (result.handover) {
    const auto& h = *result.handover;
    j["handover"] = {{"noop", h.report.noop},
                     {"completed", h.report.completed},
                     {"measured_latency_ms", h.report.measured_latency.count()},
                     {"predicted_latency_ms", h.report.predicted.count()},
                     {"lost_bytes", h.report.lost_bytes},
                     {"bytes_sent", h.bytes_sent},
                     {"bytes_delivered", h.bytes_delivered},
                     {"location_phases", h.location_phases}};
  }
  return j.dump(2) + "\n";
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error(Errc::io_error, "write failed: " + path.string());
}

}  // namespace

void emit_report(const RunResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(Errc::io_error, "cannot create " + dir.string());
  write_file(dir / "metrics.csv", metrics_csv(result.rows));
  write_file(dir / "timeseries.csv", series_csv(result.series));
  write_file(dir / "chunk_trace.csv", trace_csv(result.trace));
  write_file(dir / "run.json", run_json(result));
}

}  // namespace chordmob::harness
