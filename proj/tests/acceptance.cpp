// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "chordmob/chord.hpp"
#include "chordmob/error.hpp"
#include "chordmob/harness.hpp"
#include "chordmob/location.hpp"
#include "oracles.hpp"

using namespace chordmob;
using namespace std::chrono_literals;
using simnet::SimTime;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const char* name, const std::function<Verdict()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("threw ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::printf("[%s] %2d %-28s %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt_pct(double v, int digits = 1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

chord::OverlayConfig overlay(unsigned bits, std::uint64_t seed = 1) {
  chord::OverlayConfig c;
  c.bits = bits;
  c.seed = seed;
  return c;
}

harness::ScenarioConfig handover_cfg() {
  harness::ScenarioConfig c;
  c.experiment = harness::Experiment::handover;
  c.node_counts = {20};
  c.t_pc_ms = 50;
  return c;
}

// 1. Every id on 200 random rings resolves to the linear-scan successor.
Verdict chord_oracle() {
  constexpr unsigned m = 8;
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0, checked = 0;
  for (int ring = 0; ring < 200; ++ring) {
    const int n = 1 + static_cast<int>(rng() % 64);
    std::set<std::uint64_t> members;
    while (static_cast<int>(members.size()) < n) members.insert(rng() % 256);
    std::vector<NodeId> ids;
    for (auto v : members) ids.emplace_back(v, m);

    chord::Overlay o(overlay(m, ring));
    if (ring % 2 == 0) {
      o.build_stable(ids);
    } else {
      // Grown by joins, then stabilized long enough to fix every finger.
      o.join(ids.front(), make_locator(10, 0, 0, 1, 0), std::nullopt);
      for (std::size_t i = 1; i < ids.size(); ++i) {
        o.join(ids[i], make_locator(10, 0, 0, static_cast<std::uint8_t>(i + 1), 0), ids[rng() % i]);
        o.stabilize_all();
      }
      for (unsigned r = 0; r < 3 * m; ++r) o.stabilize_all();
    }
    for (std::uint64_t key = 0; key < 256; ++key) {
      const NodeId from = ids[rng() % ids.size()];
      const auto r = o.find_successor(from, NodeId(key, m));
      ++checked;
      if (!r.ok() || r.target.value() != oracle::successor(members, key, m)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(checked) + " lookups, " + std::to_string(mismatches) + " mismatches"};
}

// 2. Mean hops stay within 2 log2 N.
Verdict hop_scaling() {
  bool ok = true;
  std::string detail;
  for (int n : {16, 64, 256, 1024}) {
    std::mt19937_64 rng(n);
    std::set<std::uint64_t> members;
    while (static_cast<int>(members.size()) < n) members.insert(rng() & 0xffff);
    std::vector<NodeId> ids;
    for (auto v : members) ids.emplace_back(v, 16);
    chord::Overlay o(overlay(16));
    o.build_stable(ids);
    std::uint64_t hops = 0;
    for (int q = 0; q < 1000; ++q) {
      const auto r = o.find_successor(ids[rng() % ids.size()], NodeId(rng() & 0xffff, 16));
      if (!r.ok()) return {false, "lookup failed on stable ring"};
      hops += r.hops;
    }
    const double mean = static_cast<double>(hops) / 1000.0;
    const double bound = 2.0 * std::log2(n);
    ok = ok && mean <= bound;
    detail += "N=" + std::to_string(n) + ":" + fmt_pct(mean) + "<=" + fmt_pct(bound) + " ";
  }
  return {ok, detail};
}

// 3 and 4. Handover latency against the closed-form prediction.
Verdict handover_latency(bool bundling, std::int64_t expected) {
  auto c = handover_cfg();
  c.bundling = bundling;
  const auto res = harness::run(c);
  const auto& h = res.handover->report;
  const std::int64_t got = h.measured_latency.count();
  const bool ok = h.completed && std::llabs(got - expected) <= 1 && (!bundling || h.lost_bytes == 0);
  return {ok, "measured " + std::to_string(got) + " ms, expected " + std::to_string(expected) + " ms, lost " +
                  std::to_string(h.lost_bytes) + " B"};
}

// 5. Cumulative delivery never dips, 20 seeds with 1% loss.
Verdict monotone_delivery() {
  int dips = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto c = handover_cfg();
    c.seed = seed;
    c.loss_prob = 0.01;
    const auto res = harness::run(c);
    if (res.series.empty()) return {false, "empty series"};
    for (std::size_t i = 1; i < res.series.size(); ++i) {
      if (res.series[i].bytes_delivered < res.series[i - 1].bytes_delivered) ++dips;
    }
    if (res.series.back().bytes_delivered == 0) return {false, "nothing delivered"};
  }
  return {dips == 0, "20 seeds, " + std::to_string(dips) + " dips"};
}

// 6. Lookup success under loss and stale fingers.
Verdict lookup_under_loss() {
  harness::ScenarioConfig c;
  c.node_counts = {100, 200, 300, 400};
  c.queries_per_point = 25;
  c.loss_prob = 0.01;
  c.stale_finger_fraction = 0.1;
  c.seeds = 20;
  bool ok = true;
  std::string detail;
  for (const auto& r : harness::run(c).rows) {
    ok = ok && r.success_pct() >= 95.0;
    detail += "N=" + std::to_string(r.node_count) + ":" + fmt_pct(r.success_pct()) + "% ";
  }
  return {ok, detail};
}

// 7. Success along the ungraceful removal ladder.
Verdict churn_ladder() {
  harness::ScenarioConfig c;
  c.experiment = harness::Experiment::churn;
  c.node_counts = {400, 300, 200, 100};
  c.successor_list_length = 4;
  c.duration_ms = 240000;
  c.seeds = 20;
  bool ok = true;
  std::string detail;
  for (const auto& r : harness::run(c).rows) {
    ok = ok && r.success_pct() >= 90.0;
    detail += "N=" + std::to_string(r.node_count) + ":" + fmt_pct(r.success_pct()) + "% ";
  }
  return {ok, detail};
}

// 8. Successor pointers never cost hops and save some on average.
Verdict pointer_shortcut() {
  std::mt19937_64 rng(88);
  std::set<std::uint64_t> members;
  while (members.size() < 256) members.insert(rng() & 0xffff);
  std::vector<NodeId> ring;
  for (auto v : members) ring.emplace_back(v, 16);
  chord::Overlay o(overlay(16));
  o.build_stable(ring);
  location::LocationService svc(o, {});
  std::vector<Uid> uids;
  for (int i = 0; i < 50; ++i) {
    uids.push_back(Uid{"user" + std::to_string(i), "laptop", "0"});
    svc.publish(ring[rng() % ring.size()], uids.back(), make_locator(10, 1, 0, 1, 1), 0ms);
  }
  std::uint64_t plain_sum = 0, fast_sum = 0;
  int worse = 0;
  for (int q = 0; q < 1000; ++q) {
    const Uid& uid = uids[rng() % uids.size()];
    const NodeId cn = ring[rng() % ring.size()];
    svc.set_use_pointers(false);
    const auto plain = svc.resolve(cn, uid, 1ms);
    svc.set_use_pointers(true);
    const auto fast = svc.resolve(cn, uid, 1ms);
    if (fast.hops > plain.hops || fast.tls != plain.tls) ++worse;
    plain_sum += plain.hops;
    fast_sum += fast.hops;
  }
  const bool ok = worse == 0 && fast_sum < plain_sum;
  return {ok, "mean hops " + fmt_pct(fast_sum / 1000.0, 3) + " vs " + fmt_pct(plain_sum / 1000.0, 3) + ", " +
                  std::to_string(worse) + " worse"};
}

// 9. Redirect continuity across the switch and after BN1 lapses.
Verdict redirect_continuity() {
  constexpr unsigned m = 8;
  chord::Overlay o(overlay(m));
  std::vector<NodeId> ids;
  for (std::uint64_t v : {3, 50, 100, 150, 220}) ids.emplace_back(v, m);
  o.build_stable(ids);
  location::LocationService svc(o, {});
  const Locator tl1 = make_locator(10, 1, 0, 5, 1);
  const Locator tl2 = make_locator(10, 2, 0, 5, 2);
  const Uid uid{"alice", "phone", "7"};
  const NodeId mn = o.id(50);
  const NodeId bn1 = svc.publish(mn, uid, tl1, 0ms);
  const NodeId key = svc.key_of(uid);
  if (key == bn1) return {false, "rig key already owned by BN1"};

  svc.handover_update(mn, uid, tl2, location::UpdatePhase::enter_overlap, 25s);
  // A network-2 node whose id is the key becomes the new base node.
  o.join(key, make_locator(10, 2, 0, 1, 2), o.id(3));
  for (int i = 0; i < 3; ++i) o.stabilize_all();
  svc.handover_update(mn, uid, tl2, location::UpdatePhase::switch_primary, 30s);
  const auto* redirect = svc.redirect_at(bn1, key);
  if (!redirect) return {false, "no redirect at BN1"};
  const SimTime lapse = redirect->expires_at;

  int issued = 0, bad = 0;
  auto check = [&](const location::ResolveResult& r) {
    ++issued;
    if (r.tls.empty() || r.tls.front() != tl2) ++bad;
  };
  for (SimTime t = 30s; t < lapse; t += 500ms) {
    if (t == 35s) svc.handover_update(mn, uid, tl2, location::UpdatePhase::leave_overlap, t);
    if (t.count() % 10000 == 0) svc.refresh(mn, uid, t);
    svc.expire(t);
    for (NodeId cn : o.live_ids()) {
      if (cn == mn) continue;
      try {
        check(svc.resolve(cn, uid, t));
        check(svc.resolve_at(cn, bn1, uid, t));
      } catch (const Error&) {
        ++issued;
        ++bad;
      }
    }
  }
  const int before = issued;
  const int bad_before = bad;
  for (SimTime t = lapse; t < lapse + 20s; t += 1s) {
    if (t.count() % 10000 == 0) svc.refresh(mn, uid, t);
    svc.expire(t);
    for (NodeId cn : o.live_ids()) {
      if (cn == mn) continue;
      try {
        const auto r = svc.resolve(cn, uid, t);
        check(r);
        if (r.answered_by != key) ++bad;
      } catch (const Error&) {
        ++issued;
        ++bad;
      }
    }
  }
  return {bad == 0, std::to_string(before) + " resolves before lapse (" + std::to_string(bad_before) + " bad), " +
                        std::to_string(issued - before) + " after (" + std::to_string(bad - bad_before) + " bad)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Reruns with the same config and seed write identical files.
Verdict determinism() {
  auto lossy = handover_cfg();
  lossy.loss_prob = 0.02;
  harness::ScenarioConfig lookup;
  lookup.loss_prob = 0.01;
  lookup.stale_finger_fraction = 0.1;
  lookup.seeds = 3;
  harness::ScenarioConfig churn;
  churn.experiment = harness::Experiment::churn;
  churn.node_counts = {200, 100};
  churn.duration_ms = 60000;
  churn.seeds = 3;

  const auto root = std::filesystem::temp_directory_path() / "chordmob_acceptance";
  std::filesystem::remove_all(root);
  int compared = 0, differing = 0;
  int idx = 0;
  for (const auto& cfg : {lossy, lookup, churn}) {
    const auto a = root / (std::to_string(idx) + "a");
    const auto b = root / (std::to_string(idx) + "b");
    ++idx;
    harness::emit_report(harness::run(cfg, harness::SweepMode::parallel), a);
    harness::emit_report(harness::run(cfg, harness::SweepMode::serial), b);
    for (const char* f : {"metrics.csv", "timeseries.csv", "chunk_trace.csv", "run.json"}) {
      ++compared;
      if (slurp(a / f) != slurp(b / f)) ++differing;
    }
  }
  std::filesystem::remove_all(root);
  return {differing == 0, std::to_string(compared) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  report(1, "chord oracle equivalence", chord_oracle);
  report(2, "hop scaling", hop_scaling);
  report(3, "handover latency, bundled", [] { return handover_latency(true, 50); });
  report(4, "handover latency, unbundled", [] { return handover_latency(false, 3 * (10 + 10) + 50); });
  report(5, "monotone delivery", monotone_delivery);
  report(6, "lookup success under loss", lookup_under_loss);
  report(7, "success under churn", churn_ladder);
  report(8, "pointer shortcut", pointer_shortcut);
  report(9, "redirect continuity", redirect_continuity);
  report(10, "determinism", determinism);
  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
