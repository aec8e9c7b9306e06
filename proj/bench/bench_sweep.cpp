#include <benchmark/benchmark.h>
#include <omp.h>

#include "chordmob/harness.hpp"

using namespace chordmob::harness;

namespace {

ScenarioConfig lookup_sweep() {
  ScenarioConfig c;
  c.loss_prob = 0.01;
  c.stale_finger_fraction = 0.1;
  c.seeds = 20;
  return c;
}

ScenarioConfig churn_sweep() {
  ScenarioConfig c;
  c.experiment = Experiment::churn;
  c.node_counts = {400, 300, 200, 100};
  c.duration_ms = 240000;
  c.seeds = 20;
  return c;
}

void BM_LookupSweep(benchmark::State& state, SweepMode mode) {
  const auto cfg = lookup_sweep();
  for (auto _ : state) benchmark::DoNotOptimize(run_lookup_scaling(cfg, mode));
  state.counters["threads"] = mode == SweepMode::parallel ? omp_get_max_threads() : 1;
}

void BM_ChurnSweep(benchmark::State& state, SweepMode mode) {
  const auto cfg = churn_sweep();
  for (auto _ : state) benchmark::DoNotOptimize(run_churn(cfg, mode));
  state.counters["threads"] = mode == SweepMode::parallel ? omp_get_max_threads() : 1;
}

}  // namespace

BENCHMARK_CAPTURE(BM_LookupSweep, serial, SweepMode::serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_CAPTURE(BM_LookupSweep, parallel, SweepMode::parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_CAPTURE(BM_ChurnSweep, serial, SweepMode::serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_CAPTURE(BM_ChurnSweep, parallel, SweepMode::parallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
