#include <cstdio>
#include <optional>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "chordmob/error.hpp"
#include "chordmob/harness.hpp"

using namespace chordmob;

namespace {

int exit_code(Errc c) {
  switch (c) {
    case Errc::config_invalid: return 2;
    case Errc::io_error: return 3;
    default: return 1;
  }
}

void summarize(const harness::RunResult& r) {
  for (const auto& row : r.rows) {
    fmt::print("{:>15} N={:<4} success {:6.2f}%  hops {:.2f}  latency {:.1f} ms  ({} queries)\n", row.experiment,
               row.node_count, row.success_pct(), row.mean_hops(), row.mean_latency_ms(), row.tally.issued);
  }
  if (r.handover) {
    const auto& h = r.handover->report;
    fmt::print("handover: latency {} ms (predicted {} ms), lost {} bytes, delivered {}/{} bytes\n",
               h.measured_latency.count(), h.predicted.count(), h.lost_bytes, r.handover->bytes_delivered,
               r.handover->bytes_sent);
  }
  if (r.calibrated_reconstruction) fmt::print("note: loss and stale-finger settings are a calibrated reconstruction\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chord-based location service with mSCTP handover: experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool serial = false;

  const std::pair<const char*, harness::Experiment> commands[] = {
      {"handover", harness::Experiment::handover},
      {"lookup", harness::Experiment::lookup_scaling},
      {"churn", harness::Experiment::churn},
      {"custom", harness::Experiment::custom},
  };
  std::optional<harness::Experiment> chosen;
  for (const auto& [name, experiment] : commands) {
    auto* sub = app.add_subcommand(name, fmt::format("run the {} experiment", harness::to_string(experiment)));
    sub->add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "overrides the seed in the config file");
    sub->add_option("--out", out_dir, "report directory")->capture_default_str();
    sub->add_flag("--serial", serial, "run sweep points on one thread");
    sub->callback([&chosen, e = experiment] { chosen = e; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    harness::ScenarioConfig cfg = config_path.empty() ? harness::ScenarioConfig{} : harness::load_config(config_path);
    cfg.experiment = *chosen;
    if (seed) cfg.seed = *seed;
    cfg.validate();

    const auto result = harness::run(cfg, serial ? harness::SweepMode::serial : harness::SweepMode::parallel);
    harness::emit_report(result, out_dir);
    summarize(result);
    fmt::print("wrote {}/{{metrics.csv,timeseries.csv,chunk_trace.csv,run.json}}\n", out_dir);
    return 0;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.code());
  }
}
