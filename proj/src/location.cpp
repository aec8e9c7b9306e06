#include "chordmob/location.hpp"

#include <algorithm>
#include <set>

#include "chordmob/error.hpp"

namespace chordmob::location {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::PUBLISH: return "PUBLISH";
    case MessageKind::PUBLISH_ACK: return "PUBLISH_ACK";
    case MessageKind::UPDATE: return "UPDATE";
    case MessageKind::UPDATE_ACK: return "UPDATE_ACK";
    case MessageKind::QUERY: return "QUERY";
    case MessageKind::QUERY_REDIRECT: return "QUERY_REDIRECT";
    case MessageKind::POINTER_INSTALL: return "POINTER_INSTALL";
    case MessageKind::TL_REPLY: return "TL_REPLY";
  }
  return "UNKNOWN";
}

std::string_view to_string(UpdatePhase phase) {
  switch (phase) {
    case UpdatePhase::enter_overlap: return "enter-overlap";
    case UpdatePhase::switch_primary: return "switch-primary";
    case UpdatePhase::leave_overlap: return "leave-overlap";
  }
  return "unknown";
}

LocationService::LocationService(chord::Overlay& overlay, LocationConfig config)
    : overlay_(overlay), config_(config) {
  if (!(config.refresh_period < config.pointer_ttl && config.pointer_ttl <= config.record_ttl)) {
    throw Error(Errc::invalid_argument, "need refresh_period < pointer_ttl <= record_ttl");
  }
}

NodeId LocationService::key_of(const Uid& uid) const { return hash_to_id(uid, overlay_.config().bits); }

void LocationService::log(SimTime at, MessageKind kind, NodeId from, NodeId to) {
  messages_.push_back(MessageEvent{at, kind, from, to});
}

const Registration* LocationService::registration(const Uid& uid) const {
  auto it = registrations_.find(uid.canonical());
  return it == registrations_.end() ? nullptr : &it->second;
}

Registration& LocationService::require_registration(const Uid& uid) {
  auto it = registrations_.find(uid.canonical());
  if (it == registrations_.end()) throw Error(Errc::stale_phase, "no active registration for " + uid.canonical());
  return it->second;
}

const LocatorRecord* LocationService::record_at(NodeId node, NodeId key) const {
  if (!overlay_.alive(node)) return nullptr;
  auto t = tables_.find(node);
  if (t == tables_.end()) return nullptr;
  auto it = t->second.records.find(key);
  return it == t->second.records.end() ? nullptr : &it->second;
}

const SuccessorPointer* LocationService::pointer_at(NodeId node, NodeId key) const {
  if (!overlay_.alive(node)) return nullptr;
  auto t = tables_.find(node);
  if (t == tables_.end()) return nullptr;
  auto it = t->second.pointers.find(key);
  return it == t->second.pointers.end() ? nullptr : &it->second;
}

const RedirectEntry* LocationService::redirect_at(NodeId node, NodeId key) const {
  if (!overlay_.alive(node)) return nullptr;
  auto t = tables_.find(node);
  if (t == tables_.end()) return nullptr;
  auto it = t->second.redirects.find(key);
  return it == t->second.redirects.end() ? nullptr : &it->second;
}

std::vector<NodeId> LocationService::record_holders(NodeId key) const {
  std::vector<NodeId> out;
  for (const auto& [node, t] : tables_) {
    if (overlay_.alive(node) && t.records.contains(key)) out.push_back(node);
  }
  return out;
}

void LocationService::store_record(NodeId bn, const Uid& uid, std::vector<Locator> tls, SimTime now) {
  if (tls.empty() || tls.size() > 2) throw Error(Errc::invalid_argument, "a record holds one or two locators");
  const NodeId key = key_of(uid);
  LocatorRecord rec{uid, key, std::move(tls), {}, now, now + config_.record_ttl};
  rec.owner_addr = rec.tls.front();
  tables_[bn].records.insert_or_assign(key, std::move(rec));
}

void LocationService::install_pointers(NodeId bn, NodeId key, SimTime now) {
  std::size_t planted = 0;
  for (NodeId s : overlay_.node(bn).successor_list) {
    if (planted == config_.pointer_fanout) break;
    if (s == bn || !overlay_.alive(s)) continue;
    tables_[s].pointers.insert_or_assign(key, SuccessorPointer{key, bn, now + config_.pointer_ttl});
    log(now, MessageKind::POINTER_INSTALL, bn, s);
    ++planted;
  }
}

void LocationService::install_pointer(NodeId at, NodeId key, NodeId base, SimTime now) {
  tables_[at].pointers.insert_or_assign(key, SuccessorPointer{key, base, now + config_.pointer_ttl});
}

NodeId LocationService::publish_tls(NodeId mn, const Uid& uid, std::vector<Locator> tls, SimTime now) {
  const NodeId key = key_of(uid);
  const auto found = overlay_.route(mn, key, chord::RouteOptions{});
  if (!found.ok()) {
    throw Error(Errc::publish_failed,
                "base node lookup for " + uid.canonical() + " ended with " + std::string(chord::to_string(found.status)));
  }
  const NodeId bn = found.target;
  log(now, MessageKind::PUBLISH, mn, bn);
  store_record(bn, uid, tls, now);
  install_pointers(bn, key, now);
  log(now, MessageKind::PUBLISH_ACK, bn, mn);

  auto [it, inserted] = registrations_.try_emplace(uid.canonical());
  Registration& reg = it->second;
  reg.uid = uid;
  reg.key = key;
  reg.mn = mn;
  reg.base_node = bn;
  reg.tls = std::move(tls);
  return bn;
}

NodeId LocationService::publish(NodeId mn, const Uid& uid, const Locator& tl, SimTime now) {
  return publish_tls(mn, uid, {tl}, now);
}

RefreshOutcome LocationService::refresh(NodeId mn, const Uid& uid, SimTime now) {
  auto it = registrations_.find(uid.canonical());
  if (it == registrations_.end()) {
    return RefreshOutcome{false, publish_tls(mn, uid, {overlay_.node(mn).address}, now)};
  }
  Registration& reg = it->second;
  const NodeId bn = reg.base_node;
  chord::RouteResult acc;
  log(now, MessageKind::UPDATE, mn, bn);
  if (overlay_.contact(mn, bn, acc, false)) {
    auto& records = tables_[bn].records;
    if (auto rec = records.find(reg.key); rec != records.end()) {
      rec->second.tls = reg.tls;
      rec->second.owner_addr = reg.tls.front();
      rec->second.expires_at = now + config_.record_ttl;
    } else {
      store_record(bn, uid, reg.tls, now);
    }
    if (config_.refresh_pointers) install_pointers(bn, reg.key, now);
    log(now, MessageKind::UPDATE_ACK, bn, mn);
    return RefreshOutcome{true, bn};
  }
  // No acknowledgement: find another base node.
  return RefreshOutcome{false, publish_tls(mn, uid, reg.tls, now)};
}

ResolveResult LocationService::answer(NodeId cn, NodeId at, NodeId key, chord::RouteResult route, SimTime now) {
  NodeId prev = cn;
  for (NodeId hop : route.path) {
    log(now, MessageKind::QUERY, prev, hop);
    prev = hop;
  }

  ResolveResult res;
  res.path = route.path;
  auto fill = [&](NodeId holder, const LocatorRecord& rec) {
    res.tls = rec.tls;
    res.answered_by = holder;
    res.hops = route.hops;
    res.elapsed = route.elapsed;
    log(now, MessageKind::TL_REPLY, holder, cn);
    return res;
  };

  const RedirectEntry* redirect = redirect_at(at, key);
  if (redirect && redirect->expires_at > now) {
    const NodeId next = redirect->new_base;
    log(now, MessageKind::QUERY_REDIRECT, at, next);
    if (!overlay_.contact(at, next, route, false) || route.elapsed > overlay_.config().deadline) {
      throw Error(Errc::lookup_timeout, "redirected query did not complete");
    }
    res.path = route.path;
    res.via_redirect = true;
    const LocatorRecord* rec = record_at(next, key);
    if (rec && rec->expires_at > now) return fill(next, *rec);
    throw Error(Errc::not_found, "redirect target holds no record");
  }
  const LocatorRecord* rec = record_at(at, key);
  if (rec && rec->expires_at > now) return fill(at, *rec);
  throw Error(Errc::not_found, "no record for key " + std::to_string(key.value()));
}

ResolveResult LocationService::resolve(NodeId cn, const Uid& uid, SimTime now) {
  const NodeId key = key_of(uid);
  std::set<NodeId> pointer_targets;
  chord::RouteOptions options;
  options.start_at_successor = true;
  options.divert = [&](const chord::RingNode& hop) -> std::optional<NodeId> {
    if (const auto* r = redirect_at(hop.id, key); r && r->expires_at > now) return hop.id;
    if (const auto* r = record_at(hop.id, key); r && r->expires_at > now) return hop.id;
    // The CN hands the query to its successor; its own pointers are not consulted.
    if (config_.use_pointers && hop.id != cn) {
      if (const auto* p = pointer_at(hop.id, key); p && p->expires_at > now) {
        pointer_targets.insert(p->base_node);
        return p->base_node;
      }
    }
    return std::nullopt;
  };
  const auto route = overlay_.route(cn, key, options);
  if (!route.ok()) {
    throw Error(Errc::lookup_timeout, "query for " + uid.canonical() + " ended with " +
                                          std::string(chord::to_string(route.status)));
  }
  const bool via_pointer = route.diverted && pointer_targets.contains(route.target);
  ResolveResult res = answer(cn, route.target, key, route, now);
  res.via_pointer = via_pointer;
  return res;
}

ResolveResult LocationService::resolve_at(NodeId cn, NodeId base, const Uid& uid, SimTime now) {
  chord::RouteResult acc;
  if (!overlay_.contact(cn, base, acc, false)) throw Error(Errc::lookup_timeout, "base node unreachable");
  return answer(cn, base, key_of(uid), acc, now);
}

void LocationService::handover_update(NodeId mn, const Uid& uid, const Locator& new_tl, UpdatePhase phase,
                                      SimTime now) {
  Registration& reg = require_registration(uid);
  const int expected = static_cast<int>(phase);
  if (reg.phase != expected) {
    throw Error(Errc::stale_phase, std::string(to_string(phase)) + " out of order for " + uid.canonical());
  }

  // UPDATE to the current base node; falls back to a fresh publish when it
  // cannot be reached.
  auto update_current = [&](std::vector<Locator> tls) {
    const NodeId bn = reg.base_node;
    chord::RouteResult acc;
    log(now, MessageKind::UPDATE, mn, bn);
    if (!overlay_.contact(mn, bn, acc, false)) {
      publish_tls(mn, uid, std::move(tls), now);
      return;
    }
    store_record(bn, uid, tls, now);
    log(now, MessageKind::UPDATE_ACK, bn, mn);
    reg.tls = std::move(tls);
  };

  switch (phase) {
    case UpdatePhase::enter_overlap: {
      if (std::find(reg.tls.begin(), reg.tls.end(), new_tl) != reg.tls.end()) {
        throw Error(Errc::invalid_argument, "new locator already registered");
      }
      // Both locators, old one still primary, sent over interface 1.
      update_current({reg.tls.front(), new_tl});
      break;
    }
    case UpdatePhase::switch_primary: {
      const Locator old = reg.tls.front();
      std::vector<Locator> tls{new_tl, old};
      const auto found = overlay_.route(mn, reg.key, chord::RouteOptions{});
      if (!found.ok()) throw Error(Errc::publish_failed, "could not locate the new base node");
      const NodeId bn1 = reg.base_node;
      const NodeId bn2 = found.target;
      if (bn2 == bn1) {
        update_current(std::move(tls));
        break;
      }
      log(now, MessageKind::PUBLISH, mn, bn2);
      store_record(bn2, uid, tls, now);
      install_pointers(bn2, reg.key, now);
      log(now, MessageKind::PUBLISH_ACK, bn2, mn);
      // BN2 tells BN1 to forward queries until BN1's state lapses.
      log(now, MessageKind::QUERY_REDIRECT, bn2, bn1);
      if (overlay_.alive(bn1)) {
        const SimTime until = now + config_.redirect_ttl;
        auto& t = tables_[bn1];
        t.redirects.insert_or_assign(reg.key, RedirectEntry{reg.key, bn2, until});
        if (auto rec = t.records.find(reg.key); rec != t.records.end()) rec->second.expires_at = until;
      }
      reg.previous_base = bn1;
      reg.base_node = bn2;
      reg.tls = std::move(tls);
      break;
    }
    case UpdatePhase::leave_overlap: {
      if (reg.tls.front() != new_tl) throw Error(Errc::invalid_argument, "leave-overlap must keep the primary locator");
      update_current({new_tl});
      break;
    }
  }
  reg.phase = phase == UpdatePhase::leave_overlap ? 0 : expected + 1;
}

std::size_t LocationService::expire(SimTime now) {
  std::size_t purged = 0;
  for (auto it = tables_.begin(); it != tables_.end();) {
    if (!overlay_.alive(it->first)) {
      it = tables_.erase(it);
      continue;
    }
    auto& t = it->second;
    purged += std::erase_if(t.records, [&](const auto& kv) { return kv.second.expires_at <= now; });
    purged += std::erase_if(t.pointers, [&](const auto& kv) { return kv.second.expires_at <= now; });
    purged += std::erase_if(t.redirects, [&](const auto& kv) { return kv.second.expires_at <= now; });
    ++it;
  }
  return purged;
}

}  // namespace chordmob::location
