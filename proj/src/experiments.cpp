#include <algorithm>
#include <map>
#include <set>

#include "chordmob/chord.hpp"
#include "chordmob/error.hpp"
#include "chordmob/harness.hpp"
#include "chordmob/location.hpp"

namespace chordmob::harness {

using namespace std::chrono_literals;

Tally& Tally::operator+=(const Tally& o) {
  issued += o.issued;
  succeeded += o.succeeded;
  timed_out += o.timed_out;
  failed += o.failed;
  hop_sum += o.hop_sum;
  latency_sum_ms += o.latency_sum_ms;
  return *this;
}

double MetricsRow::success_pct() const {
  return tally.issued == 0 ? 0.0 : 100.0 * static_cast<double>(tally.succeeded) / static_cast<double>(tally.issued);
}
double MetricsRow::mean_hops() const {
  return tally.succeeded == 0 ? 0.0 : static_cast<double>(tally.hop_sum) / static_cast<double>(tally.succeeded);
}
double MetricsRow::mean_latency_ms() const {
  return tally.succeeded == 0 ? 0.0 : static_cast<double>(tally.latency_sum_ms) / static_cast<double>(tally.succeeded);
}

namespace {

chord::OverlayConfig overlay_config(const ScenarioConfig& cfg, std::uint64_t seed) {
  chord::OverlayConfig o;
  o.bits = cfg.m;
  o.successor_list_length = static_cast<std::size_t>(cfg.successor_list_length);
  o.one_way_latency = SimTime(cfg.link_latency_ms);
  o.loss_prob = cfg.loss_prob;
  o.rpc_timeout = SimTime(cfg.rpc_timeout_ms);
  o.deadline = SimTime(cfg.query_deadline_ms);
  o.seed = seed;
  return o;
}

std::uint64_t pick(simnet::Rng& rng, std::size_t n) { return rng() % n; }

NodeId fresh_id(simnet::Rng& rng, unsigned bits, std::set<std::uint64_t>& taken) {
  const std::uint64_t mask = NodeId::mask_for(bits);
  while (true) {
    const std::uint64_t v = rng() & mask;
    if (taken.insert(v).second) return NodeId(v, bits);
  }
}

std::vector<NodeId> random_ring(simnet::Rng& rng, int n, unsigned bits, std::set<std::uint64_t>& taken) {
  std::vector<NodeId> ids;
  for (int i = 0; i < n; ++i) ids.push_back(fresh_id(rng, bits, taken));
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Setup writes bypass loss: they model data already in place.
void place(chord::Overlay& o, NodeId from, NodeId key, const std::string& value) {
  chord::RouteOptions opts;
  opts.lossless = true;
  const auto r = o.route(from, key, opts);
  if (r.ok()) o.node(r.target).store.put(key, value, 0ms);
}

void record_get(Tally& t, const chord::GetResult& g, std::size_t expected_values) {
  ++t.issued;
  if (g.route.status == chord::LookupStatus::timeout) {
    ++t.timed_out;
  } else if (g.route.ok() && g.values.size() == expected_values) {
    ++t.succeeded;
    t.hop_sum += g.route.hops;
    t.latency_sum_ms += static_cast<std::uint64_t>(g.route.elapsed.count());
  } else {
    ++t.failed;
  }
}

struct ChurnPlan {
  int initial = 0;
  std::vector<simnet::ChurnStep> steps;
  std::vector<SimTime> segment_start;  // first is 0
  std::vector<int> population;         // per segment, as scheduled
};

ChurnPlan make_plan(const ScenarioConfig& cfg) {
  ChurnPlan p;
  p.segment_start.push_back(0ms);
  if (cfg.experiment == Experiment::custom) {
    p.initial = cfg.node_counts.front();
    p.steps = cfg.churn_schedule.steps;
    p.population.push_back(p.initial);
    for (const auto& s : p.steps) {
      const int delta = s.action == simnet::ChurnStep::Action::add_nodes ? s.count : -s.count;
      if (s.at == p.segment_start.back()) {
        p.population.back() += delta;
      } else {
        p.segment_start.push_back(s.at);
        p.population.push_back(p.population.back() + delta);
      }
    }
    return p;
  }

  std::vector<int> ladder = cfg.node_counts;
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
  p.initial = ladder.front();
  p.population.push_back(p.initial);
  const std::int64_t phase = cfg.duration_ms / static_cast<std::int64_t>(ladder.size());
  // Nodes of one step are killed one after another over the first half of
  // its phase rather than in a single instant.
  for (std::size_t k = 1; k < ladder.size(); ++k) {
    const std::int64_t start = phase * static_cast<std::int64_t>(k);
    const int count = ladder[k - 1] - ladder[k];
    for (int i = 0; i < count; ++i) {
      p.steps.push_back(simnet::ChurnStep{SimTime(start + phase / 2 * i / count), simnet::ChurnStep::Action::remove_nodes, 1,
                                          cfg.graceful_removal});
    }
    p.segment_start.push_back(SimTime(start));
    p.population.push_back(ladder[k]);
  }
  return p;
}

std::uint64_t replica_seed(const ScenarioConfig& cfg, std::string_view stream, int node_count, int replica) {
  return simnet::derive_seed(cfg.seed, stream, (static_cast<std::uint64_t>(node_count) << 20) | static_cast<std::uint64_t>(replica));
}

std::string value_name(int j) { return "v" + std::to_string(j); }

}  // namespace

// --- lookup scaling ---------------------------------------------------------

Tally lookup_point(const ScenarioConfig& cfg, int node_count, int replica) {
  const std::uint64_t seed = replica_seed(cfg, "lookup", node_count, replica);
  chord::Overlay o(overlay_config(cfg, seed));
  auto id_rng = simnet::make_rng(seed, "ids");
  std::set<std::uint64_t> taken;
  const auto ids = random_ring(id_rng, node_count, cfg.m, taken);
  o.build_stable(ids);
  auto finger_rng = simnet::make_rng(seed, "fingers");
  o.perturb_fingers(cfg.stale_finger_fraction, finger_rng);

  std::vector<NodeId> keys;
  for (int k = 0; k < cfg.queries_per_point; ++k) {
    keys.push_back(hash_to_id("key-" + std::to_string(k), cfg.m));
    for (int j = 0; j < cfg.values_per_key; ++j) place(o, ids.front(), keys.back(), value_name(j));
  }

  auto q_rng = simnet::make_rng(seed, "queries");
  Tally t;
  for (int q = 0; q < cfg.queries_per_point; ++q) {
    const NodeId origin = ids[pick(q_rng, ids.size())];
    const NodeId key = keys[pick(q_rng, keys.size())];
    record_get(t, o.get(origin, key), static_cast<std::size_t>(cfg.values_per_key));
  }
  return t;
}

// --- churn ------------------------------------------------------------------

std::vector<Tally> churn_replica(const ScenarioConfig& cfg, int replica) {
  const ChurnPlan plan = make_plan(cfg);
  const std::uint64_t seed = replica_seed(cfg, "churn", plan.initial, replica);
  simnet::Scheduler sched;
  chord::Overlay o(overlay_config(cfg, seed));
  auto id_rng = simnet::make_rng(seed, "ids");
  auto churn_rng = simnet::make_rng(seed, "churn");
  auto q_rng = simnet::make_rng(seed, "queries");
  std::set<std::uint64_t> taken;
  o.build_stable(random_ring(id_rng, plan.initial, cfg.m, taken));
  auto finger_rng = simnet::make_rng(seed, "fingers");
  o.perturb_fingers(cfg.stale_finger_fraction, finger_rng);

  const SimTime end(cfg.duration_ms);
  const SimTime refresh(cfg.refresh_period_ms);
  const auto expected = static_cast<std::size_t>(cfg.values_per_key);
  std::map<NodeId, NodeId> published;  // publisher -> its key
  std::uint32_t next_address = 1;

  // Each node publishes one object and re-puts it every refresh period,
  // starting at a random phase.
  std::function<void(NodeId)> refresh_loop = [&](NodeId publisher) {
    if (!o.alive(publisher)) return;
    const NodeId key = published.at(publisher);
    for (int j = 0; j < cfg.values_per_key; ++j) o.put(publisher, key, value_name(j), sched.now());
    if (sched.now() + refresh < end) sched.schedule_in(refresh, [&, publisher] { refresh_loop(publisher); });
  };
  auto publish = [&](NodeId publisher) {
    const NodeId key = hash_to_id("object-" + std::to_string(publisher.value()), cfg.m);
    published[publisher] = key;
    for (int j = 0; j < cfg.values_per_key; ++j) place(o, publisher, key, value_name(j));
    const SimTime offset(static_cast<std::int64_t>(pick(churn_rng, static_cast<std::size_t>(cfg.refresh_period_ms))) + 1);
    if (sched.now() + offset < end) sched.schedule_in(offset, [&, publisher] { refresh_loop(publisher); });
  };
  for (NodeId id : o.live_ids()) publish(id);

  const SimTime every(cfg.stabilize_interval_ms);
  std::function<void()> stabilize = [&] {
    o.stabilize_all();
    if (sched.now() + every < end) sched.schedule_in(every, stabilize);
  };
  if (cfg.stabilization) sched.schedule_at(every, stabilize);

  for (const auto& step : plan.steps) {
    sched.schedule_at(step.at, [&, step] {
      for (int i = 0; i < step.count; ++i) {
        const auto live = o.live_ids();
        if (step.action == simnet::ChurnStep::Action::remove_nodes) {
          if (live.size() <= 1) return;
          o.depart(live[pick(churn_rng, live.size())], step.graceful);
        } else {
          const NodeId id = fresh_id(id_rng, cfg.m, taken);
          const std::uint32_t n = next_address++;
          const Locator addr = make_locator(10, 1, static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n), 1);
          try {
            o.join(id, addr, live[pick(churn_rng, live.size())]);
            publish(id);
          } catch (const Error&) {
            // bootstrap unreachable: this arrival is lost
          }
        }
      }
    });
  }

  std::vector<Tally> tallies(plan.segment_start.size());
  for (std::size_t s = 0; s < plan.segment_start.size(); ++s) {
    const SimTime from = plan.segment_start[s];
    const SimTime to = s + 1 < plan.segment_start.size() ? plan.segment_start[s + 1] : end;
    if (to <= from) continue;
    for (int q = 0; q < cfg.queries_per_point; ++q) {
      const SimTime at = from + SimTime(static_cast<std::int64_t>(pick(q_rng, static_cast<std::size_t>((to - from).count()))));
      sched.schedule_at(at, [&, s] {
        const auto live = o.live_ids();
        std::vector<NodeId> sources;
        for (NodeId id : live) {
          if (published.contains(id)) sources.push_back(id);
        }
        if (sources.empty()) return;
        const NodeId origin = live[pick(q_rng, live.size())];
        const NodeId key = published.at(sources[pick(q_rng, sources.size())]);
        record_get(tallies[s], o.get(origin, key), expected);
      });
    }
  }

  sched.run_until(end);
  return tallies;
}

// --- handover ---------------------------------------------------------------

RunResult run_handover(const ScenarioConfig& cfg) {
  cfg.validate();
  RunResult res;
  res.config = cfg;
  const int n = cfg.node_counts.front();
  MetricsRow row{"handover", n, {}};
  HandoverOutcome outcome;
  if (cfg.duration_ms == 0) {
    res.rows.push_back(row);
    res.handover = outcome;
    return res;
  }

  simnet::Scheduler sched;
  chord::Overlay o(overlay_config(cfg, simnet::derive_seed(cfg.seed, "overlay")));
  auto rng = simnet::make_rng(cfg.seed, "ids");
  std::set<std::uint64_t> taken;
  const auto ids = random_ring(rng, n, cfg.m, taken);
  o.build_stable(ids);
  const std::size_t mn_index = pick(rng, ids.size());
  const NodeId mn = ids[mn_index];
  const NodeId cn = ids[(mn_index + 1 + pick(rng, ids.size() - 1)) % ids.size()];

  location::LocationConfig lcfg;
  lcfg.record_ttl = SimTime(cfg.record_ttl_ms);
  lcfg.pointer_ttl = SimTime(cfg.pointer_ttl_ms);
  lcfg.redirect_ttl = SimTime(cfg.redirect_ttl_ms);
  lcfg.refresh_period = SimTime(cfg.refresh_period_ms);
  location::LocationService loc(o, lcfg);

  const Uid uid{"mn", "phone", "1"};
  const Locator tl1 = o.node(mn).address;
  const Locator tl2 = make_locator(10, 2, 0, static_cast<std::uint8_t>(mn_index + 1), 2);
  const Locator cn_tl = o.node(cn).address;

  loc.publish(mn, uid, tl1, 0ms);
  const auto resolved = loc.resolve(cn, uid, 0ms);
  row.tally.issued = 1;
  row.tally.succeeded = 1;
  row.tally.hop_sum = resolved.hops;
  row.tally.latency_sum_ms = static_cast<std::uint64_t>(resolved.elapsed.count());

  msctp::SessionConfig scfg;
  scfg.link = simnet::LinkModel{SimTime(cfg.link_latency_ms), cfg.loss_prob, simnet::derive_seed(cfg.seed, "msctp")};
  scfg.cn_tls = {cn_tl};
  scfg.mn_tls = {resolved.tls.front()};
  msctp::Session session(sched, scfg);
  const SimTime end(cfg.duration_ms);
  session.mn().on_established([&] { session.stream(static_cast<std::uint32_t>(cfg.chunk_bytes), SimTime(cfg.send_interval_ms), end); });
  sched.schedule_at(resolved.elapsed, [&] { session.connect(); });

  const SimTime refresh(cfg.refresh_period_ms);
  std::function<void()> upkeep = [&] {
    loc.refresh(mn, uid, sched.now());
    loc.expire(sched.now());
    if (sched.now() + refresh <= end) sched.schedule_in(refresh, upkeep);
  };
  sched.schedule_at(refresh, upkeep);

  const auto model = cfg.latency_model();
  simnet::MobilityScript script;
  script.t_enter_overlap = SimTime(cfg.t_enter_overlap_ms);
  script.t_switch = SimTime(cfg.t_switch_ms);
  script.t_leave_overlap = SimTime(cfg.t_leave_overlap_ms);
  script.network1_id = tl1.network_id;
  script.network2_id = tl2.network_id;
  script.tl1 = tl1;
  script.tl2 = tl2;
  auto phase = [&](location::UpdatePhase p) {
    loc.handover_update(mn, uid, tl2, p, sched.now());
    outcome.location_phases.emplace_back(location::to_string(p));
  };
  simnet::MobilityDriver driver(sched, script,
                                {[&] {
                                   phase(location::UpdatePhase::enter_overlap);
                                   session.enter_overlap(tl2, model);
                                 },
                                 [&] {
                                   phase(location::UpdatePhase::switch_primary);
                                   session.switch_primary(tl2, model);
                                 },
                                 [&] {
                                   phase(location::UpdatePhase::leave_overlap);
                                   session.leave_overlap(tl1);
                                 }});
  driver.apply();

  const SimTime every(cfg.sample_interval_ms);
  for (SimTime t = 0ms; t <= end; t += every) {
    sched.schedule_at(t, [&] { res.series.push_back(Sample{sched.now(), session.cn().bytes_received()}); });
  }
  sched.run_until(end);
  // Let in-flight chunks and retransmissions settle before accounting.
  sched.run_until(end + 10s);

  outcome.report = session.report();
  outcome.bytes_sent = session.mn().bytes_sent();
  outcome.bytes_delivered = session.cn().bytes_received();
  res.trace = session.trace();
  res.handover = outcome;
  res.rows.push_back(row);
  return res;
}

// --- sweeps -----------------------------------------------------------------

RunResult run_lookup_scaling(const ScenarioConfig& cfg, SweepMode mode) {
  cfg.validate();
  std::vector<SweepPoint> points;
  for (int n : cfg.node_counts) {
    for (int r = 0; r < cfg.seeds; ++r) points.push_back(SweepPoint{n, r});
  }
  const auto out = run_points(
      points, [&](const SweepPoint& p) { return std::vector<Tally>{lookup_point(cfg, p.node_count, p.replica)}; }, mode);

  RunResult res;
  res.config = cfg;
  res.calibrated_reconstruction = cfg.loss_prob > 0.0 || cfg.stale_finger_fraction > 0.0;
  std::size_t i = 0;
  for (int n : cfg.node_counts) {
    MetricsRow row{"lookup_scaling", n, {}};
    for (int r = 0; r < cfg.seeds; ++r) row.tally += out[i++].front();
    res.rows.push_back(row);
  }
  return res;
}

namespace {

RunResult run_population(const ScenarioConfig& cfg, SweepMode mode) {
  cfg.validate();
  const ChurnPlan plan = make_plan(cfg);
  std::vector<SweepPoint> points;
  for (int r = 0; r < cfg.seeds; ++r) points.push_back(SweepPoint{plan.initial, r});
  const auto out = run_points(points, [&](const SweepPoint& p) { return churn_replica(cfg, p.replica); }, mode);

  RunResult res;
  res.config = cfg;
  res.calibrated_reconstruction =
      cfg.experiment == Experiment::churn || cfg.loss_prob > 0.0 || cfg.stale_finger_fraction > 0.0;
  for (std::size_t s = 0; s < plan.segment_start.size(); ++s) {
    MetricsRow row{std::string(to_string(cfg.experiment)), plan.population[s], {}};
    for (const auto& replica : out) row.tally += replica[s];
    res.rows.push_back(row);
  }
  return res;
}

}  // namespace

RunResult run_churn(const ScenarioConfig& cfg, SweepMode mode) {
  if (cfg.experiment != Experiment::churn) throw Error(Errc::config_invalid, "experiment is not churn");
  return run_population(cfg, mode);
}

RunResult run_custom(const ScenarioConfig& cfg, SweepMode mode) {
  if (cfg.experiment != Experiment::custom) throw Error(Errc::config_invalid, "experiment is not custom");
  return run_population(cfg, mode);
}

RunResult run(const ScenarioConfig& cfg, SweepMode mode) {
  switch (cfg.experiment) {
    case Experiment::handover: return run_handover(cfg);
    case Experiment::lookup_scaling: return run_lookup_scaling(cfg, mode);
    case Experiment::churn: return run_churn(cfg, mode);
    case Experiment::custom: return run_custom(cfg, mode);
  }
  throw Error(Errc::config_invalid, "unknown experiment");
}

}  // namespace chordmob::harness
