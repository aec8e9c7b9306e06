#include "chordmob/chord.hpp"

#include <algorithm>

#include "chordmob/error.hpp"

namespace chordmob::chord {

bool in_interval(NodeId x, NodeId a, NodeId b, bool include_left, bool include_right) {
  if (a == b) return include_left || include_right || x != a;
  const std::uint64_t d = a.distance_to(x);
  const std::uint64_t span = a.distance_to(b);
  if (d == 0) return include_left;
  if (d == span) return include_right;
  return d < span;
}

std::string_view to_string(LookupStatus status) {
  switch (status) {
    case LookupStatus::ok: return "ok";
    case LookupStatus::timeout: return "timeout";
    case LookupStatus::failed: return "failed";
  }
  return "unknown";
}

// --- KeyValueStore ----------------------------------------------------------

bool KeyValueStore::put(NodeId key, std::string value, SimTime now) {
  return entries_[key].emplace(std::move(value), now).second;
}

std::set<std::string> KeyValueStore::get(NodeId key) const {
  std::set<std::string> out;
  if (auto it = entries_.find(key); it != entries_.end()) {
    for (const auto& [v, t] : it->second) out.insert(v);
  }
  return out;
}

std::map<NodeId, KeyValueStore::ValueSet> KeyValueStore::extract_unless(
    const std::function<bool(NodeId)>& keep_here) {
  std::map<NodeId, ValueSet> moved;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (keep_here(it->first)) {
      ++it;
    } else {
      moved.emplace(it->first, std::move(it->second));
      it = entries_.erase(it);
    }
  }
  return moved;
}

void KeyValueStore::merge(std::map<NodeId, ValueSet> entries) {
  for (auto& [key, values] : entries) {
    auto& dst = entries_[key];
    for (auto& [v, t] : values) dst.emplace(v, t);
  }
}

std::size_t KeyValueStore::value_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : entries_) n += v.size();
  return n;
}

// --- Overlay ----------------------------------------------------------------

Overlay::Overlay(OverlayConfig config)
    : config_(config),
      fabric_(simnet::LinkModel{config.one_way_latency, config.loss_prob,
                                simnet::derive_seed(config.seed, "chord-fabric")}) {
  if (config.bits == 0 || config.bits > NodeId::kMaxBits) throw Error(Errc::invalid_argument, "bits out of range");
  if (config.successor_list_length == 0) throw Error(Errc::invalid_argument, "successor list length must be >= 1");
  if (config.rpc_attempts < 1) throw Error(Errc::invalid_argument, "rpc_attempts must be >= 1");
}

bool Overlay::alive(NodeId id) const {
  auto it = nodes_.find(id);
  return it != nodes_.end() && it->second.alive;
}

const RingNode& Overlay::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::invalid_argument, "unknown node " + std::to_string(id.value()));
  return it->second;
}

RingNode& Overlay::node(NodeId id) {
  return const_cast<RingNode&>(static_cast<const Overlay&>(*this).node(id));
}

std::vector<NodeId> Overlay::live_ids() const {
  std::vector<NodeId> out;
  out.reserve(live_count_);
  for (const auto& [id, n] : nodes_) {
    if (n.alive) out.push_back(id);
  }
  return out;
}

std::vector<FingerEntry> Overlay::fresh_fingers(NodeId id, NodeId fill) const {
  std::vector<FingerEntry> fingers;
  fingers.reserve(config_.bits);
  for (unsigned k = 0; k < config_.bits; ++k) fingers.push_back({id.plus(std::uint64_t{1} << k), fill});
  return fingers;
}

void Overlay::rebuild_successor_list(RingNode& n, NodeId head) {
  n.successor_list.clear();
  n.successor_list.push_back(head);
  if (head == n.id) return;
  for (NodeId s : node(head).successor_list) {
    if (n.successor_list.size() >= config_.successor_list_length) break;
    if (s == n.id || !alive(s)) continue;
    if (std::find(n.successor_list.begin(), n.successor_list.end(), s) != n.successor_list.end()) continue;
    n.successor_list.push_back(s);
  }
}

void Overlay::build_stable(std::span<const NodeId> ids) {
  std::vector<NodeId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  nodes_.clear();
  live_count_ = sorted.size();
  if (sorted.empty()) return;

  const std::size_t n = sorted.size();
  auto successor_of = [&](NodeId key) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), key);
    return it == sorted.end() ? sorted.front() : *it;
  };
  for (std::size_t i = 0; i < n; ++i) {
    RingNode rn;
    rn.id = sorted[i];
    rn.address = Locator{0x0A000000u + static_cast<std::uint32_t>(i + 1), 0};
    for (std::size_t j = 1; j <= std::min(config_.successor_list_length, n - 1); ++j) {
      rn.successor_list.push_back(sorted[(i + j) % n]);
    }
    if (rn.successor_list.empty()) rn.successor_list.push_back(rn.id);
    rn.predecessor = n > 1 ? std::optional<NodeId>(sorted[(i + n - 1) % n]) : std::nullopt;
    rn.fingers = fresh_fingers(rn.id, rn.id);
    for (auto& f : rn.fingers) f.node = successor_of(f.start);
    nodes_.emplace(rn.id, std::move(rn));
  }
}

RingNode& Overlay::join(NodeId new_id, Locator address, std::optional<NodeId> bootstrap) {
  if (new_id.bits() != config_.bits) throw Error(Errc::invalid_argument, "identifier width mismatch");
  if (alive(new_id)) throw Error(Errc::invalid_argument, "node " + std::to_string(new_id.value()) + " already live");

  RingNode fresh;
  fresh.id = new_id;
  fresh.address = address;

  if (!bootstrap) {
    if (live_count_ > 0) throw Error(Errc::invalid_argument, "bootstrap required to join a non-empty ring");
    fresh.successor_list = {new_id};
    fresh.fingers = fresh_fingers(new_id, new_id);
    nodes_.insert_or_assign(new_id, std::move(fresh));
    ++live_count_;
    return nodes_.at(new_id);
  }

  if (!alive(*bootstrap)) throw Error(Errc::join_failed, "bootstrap " + std::to_string(bootstrap->value()) + " unreachable");
  RouteResult found;
  for (int attempt = 0; attempt < config_.join_attempts && !found.ok(); ++attempt) {
    found = route(*bootstrap, new_id, RouteOptions{});
  }
  if (!found.ok()) throw Error(Errc::join_failed, "successor lookup failed from bootstrap");

  const NodeId succ = found.target;
  RingNode& s = node(succ);
  fresh.fingers = fresh_fingers(new_id, succ);
  if (s.predecessor && alive(*s.predecessor) && *s.predecessor != succ) fresh.predecessor = s.predecessor;
  // The successor keeps only (new, succ]; everything else it held is now ours.
  fresh.store.merge(s.store.extract_unless([&](NodeId k) { return in_interval(k, new_id, succ, false, true); }));
  s.predecessor = new_id;

  auto [it, inserted] = nodes_.insert_or_assign(new_id, std::move(fresh));
  ++live_count_;
  rebuild_successor_list(it->second, succ);
  return it->second;
}

void Overlay::depart(NodeId id, bool graceful) {
  if (!alive(id)) throw Error(Errc::invalid_argument, "node " + std::to_string(id.value()) + " is not live");
  RingNode& n = node(id);

  if (graceful) {
    std::optional<NodeId> succ;
    for (NodeId s : n.successor_list) {
      if (s != id && alive(s)) {
        succ = s;
        break;
      }
    }
    if (succ) {
      RingNode& s = node(*succ);
      s.store.merge(n.store.extract_unless([](NodeId) { return false; }));
      if (s.predecessor == id) {
        s.predecessor = (n.predecessor && alive(*n.predecessor) && *n.predecessor != *succ) ? n.predecessor
                                                                                            : std::nullopt;
      }
      if (n.predecessor && alive(*n.predecessor) && *n.predecessor != id) {
        rebuild_successor_list(node(*n.predecessor), *succ);
      }
      // The leave announcement reaches every node routing through us.
      for (auto& [other_id, other] : nodes_) {
        if (!other.alive || other_id == id) continue;
        for (auto& f : other.fingers) {
          if (f.node == id) f.node = *succ;
        }
      }
    }
  }

  n.alive = false;
  n.store.clear();
  --live_count_;
}

void Overlay::stabilize_round(NodeId id) {
  if (!alive(id)) throw Error(Errc::invalid_argument, "cannot stabilize a dead node");
  RingNode& n = node(id);

  std::erase_if(n.successor_list, [&](NodeId s) { return s != id && !alive(s); });
  if (n.successor_list.empty()) {
    // Whole list failed: fall back to the nearest live finger.
    std::optional<NodeId> best;
    for (const auto& f : n.fingers) {
      if (f.node == id || !alive(f.node)) continue;
      if (!best || id.distance_to(f.node) < id.distance_to(*best)) best = f.node;
    }
    n.successor_list.push_back(best.value_or(id));
  }

  NodeId head = n.successor_list.front();
  const std::optional<NodeId> candidate = head == id ? n.predecessor : node(head).predecessor;
  if (candidate && *candidate != id && alive(*candidate) && in_interval(*candidate, id, head, false, false)) {
    head = *candidate;
  }
  rebuild_successor_list(n, head);

  if (head != id) {
    RingNode& s = node(head);
    if (!s.predecessor || !alive(*s.predecessor) || in_interval(id, *s.predecessor, head, false, false)) {
      s.predecessor = id;
    }
  }
  if (n.predecessor && !alive(*n.predecessor)) n.predecessor.reset();

  const unsigned k = n.next_finger;
  RouteOptions maintenance;
  maintenance.lossless = true;
  const RouteResult r = route(id, n.fingers[k].start, maintenance);
  RingNode& self = node(id);  // route() does not touch the map, but keep the reference fresh
  if (r.ok()) self.fingers[k].node = r.target;
  self.next_finger = (k + 1) % config_.bits;
}

void Overlay::stabilize_all() {
  for (NodeId id : live_ids()) {
    if (alive(id)) stabilize_round(id);
  }
}

std::size_t Overlay::perturb_fingers(double fraction, simnet::Rng& rng) {
  const auto live = live_ids();
  if (live.size() < 2 || fraction <= 0.0) return 0;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
  std::size_t changed = 0;
  for (NodeId id : live) {
    for (auto& f : node(id).fingers) {
      if (coin(rng) >= fraction) continue;
      NodeId wrong = live[pick(rng)];
      if (wrong == f.node) wrong = live[(std::find(live.begin(), live.end(), wrong) - live.begin() + 1) % live.size()];
      f.node = wrong;
      ++changed;
    }
  }
  return changed;
}

NodeId Overlay::closest_preceding_finger(const RingNode& n, NodeId key) const {
  for (auto it = n.fingers.rbegin(); it != n.fingers.rend(); ++it) {
    if (in_interval(it->node, n.id, key, false, false)) return it->node;
  }
  return n.id;
}

std::optional<NodeId> Overlay::first_successor(const RingNode& n, const std::vector<NodeId>& failed) const {
  for (NodeId s : n.successor_list) {
    if (std::find(failed.begin(), failed.end(), s) == failed.end()) return s;
  }
  return std::nullopt;
}

NodeId Overlay::best_preceding(const RingNode& n, NodeId key, const std::vector<NodeId>& failed) const {
  NodeId best = n.id;
  std::uint64_t best_dist = 0;
  auto consider = [&](NodeId c) {
    if (!in_interval(c, n.id, key, false, false)) return;
    if (std::find(failed.begin(), failed.end(), c) != failed.end()) return;
    const auto d = n.id.distance_to(c);
    if (d > best_dist) {
      best = c;
      best_dist = d;
    }
  };
  for (const auto& f : n.fingers) consider(f.node);
  for (NodeId s : n.successor_list) consider(s);
  return best;
}

bool Overlay::deadline_passed(const RouteResult& acc, bool lossless) const {
  return !lossless && acc.elapsed > config_.deadline;
}

bool Overlay::contact(NodeId from, NodeId peer, RouteResult& acc, bool lossless) {
  if (peer == from) return true;
  ++acc.hops;
  for (int attempt = 0; attempt < config_.rpc_attempts; ++attempt) {
    if (!alive(peer)) {
      acc.elapsed += config_.rpc_timeout;
      continue;
    }
    if (lossless) {
      acc.elapsed += 2 * config_.one_way_latency;
      acc.path.push_back(peer);
      return true;
    }
    const bool request = fabric_.transmit();
    const bool reply = request && fabric_.transmit();
    if (reply) {
      acc.elapsed += 2 * config_.one_way_latency;
      acc.path.push_back(peer);
      return true;
    }
    acc.elapsed += config_.rpc_timeout;
  }
  return false;
}

RouteResult Overlay::route(NodeId from, NodeId key, const RouteOptions& options) {
  if (!alive(from)) throw Error(Errc::invalid_argument, "route origin is not live");
  RouteResult acc;
  std::vector<NodeId> failed;
  std::vector<NodeId> trail;
  NodeId cur = from;
  bool first_step = true;

  auto exhausted = [&] { return acc.hops > config_.hop_cap() || deadline_passed(acc, options.lossless); };
  auto finish = [&](NodeId target, bool diverted) {
    if (exhausted()) {
      acc.status = LookupStatus::timeout;
    } else {
      acc.status = LookupStatus::ok;
      acc.target = target;
      acc.diverted = diverted;
    }
    return acc;
  };

  while (true) {
    if (exhausted()) {
      acc.status = LookupStatus::timeout;
      return acc;
    }
    const RingNode& n = node(cur);

    if (options.divert) {
      if (auto jump = options.divert(n); jump && std::find(failed.begin(), failed.end(), *jump) == failed.end()) {
        if (*jump == cur || contact(from, *jump, acc, options.lossless)) return finish(*jump, true);
        failed.push_back(*jump);
        continue;
      }
    }

    const auto succ = first_successor(n, failed);
    if (!succ) {
      // This node knows no usable successor; back up one hop.
      if (trail.empty()) {
        acc.status = LookupStatus::failed;
        return acc;
      }
      failed.push_back(cur);
      cur = trail.back();
      trail.pop_back();
      continue;
    }

    NodeId next;
    bool terminal = false;
    if (in_interval(key, n.id, *succ, false, true)) {
      next = *succ;
      terminal = true;
    } else if (first_step && options.start_at_successor) {
      next = *succ;
    } else {
      next = best_preceding(n, key, failed);
      if (next == n.id) next = *succ;
    }
    first_step = false;

    if (contact(from, next, acc, options.lossless)) {
      if (terminal) return finish(next, false);
      if (next != cur) {
        trail.push_back(cur);
        cur = next;
      }
    } else {
      failed.push_back(next);
    }
  }
}

LookupResult Overlay::find_successor(NodeId from, NodeId key) { return route(from, key, RouteOptions{}); }

RouteResult Overlay::put(NodeId origin, NodeId key, std::string value, SimTime now) {
  RouteResult r = route(origin, key, RouteOptions{});
  if (r.ok()) node(r.target).store.put(key, std::move(value), now);
  return r;
}

GetResult Overlay::get(NodeId origin, NodeId key) {
  GetResult g{route(origin, key, RouteOptions{}), {}};
  if (g.route.ok()) g.values = node(g.route.target).store.get(key);
  return g;
}

}  // namespace chordmob::chord
