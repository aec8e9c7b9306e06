#pragma once

// Chord identifier circle: finger tables, successor lists, join / depart /
// stabilize, iterative lookup and a multi-value key-value store.
//
// Remote calls are accounted in simulated time rather than scheduled as
// individual events: each successful request/response costs two one-way
// latencies, each lost message or dead peer costs one rpc timeout. The caller
// (usually a scheduler event) decides *when* an operation happens; the
// overlay decides how long it took and whether it finished before the
// deadline.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "chordmob/ident.hpp"
#include "chordmob/simnet.hpp"

namespace chordmob::chord {

using simnet::SimTime;

// True iff x lies on the circular interval from a to b. When a == b the
// interval is the whole circle, minus a itself if both ends are open.
bool in_interval(NodeId x, NodeId a, NodeId b, bool include_left, bool include_right);

struct FingerEntry {
  NodeId start;  // n + 2^(k-1) mod 2^m
  NodeId node;   // believed successor of start
};

// Set-valued store: values under one key are distinct; re-inserting a value
// keeps its first insertion time.
class KeyValueStore {
 public:
  using ValueSet = std::map<std::string, SimTime>;

  bool put(NodeId key, std::string value, SimTime now);
  std::set<std::string> get(NodeId key) const;
  bool contains(NodeId key) const { return entries_.contains(key); }

  // Removes and returns every key for which keep_here(key) is false.
  std::map<NodeId, ValueSet> extract_unless(const std::function<bool(NodeId)>& keep_here);
  void merge(std::map<NodeId, ValueSet> entries);

  std::size_t key_count() const { return entries_.size(); }
  std::size_t value_count() const;
  const std::map<NodeId, ValueSet>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::map<NodeId, ValueSet> entries_;
};

struct RingNode {
  NodeId id;
  Locator address;
  std::vector<FingerEntry> fingers;
  std::vector<NodeId> successor_list;
  std::optional<NodeId> predecessor;
  KeyValueStore store;
  bool alive = true;
  unsigned next_finger = 0;

  NodeId successor() const { return successor_list.front(); }
};

struct OverlayConfig {
  unsigned bits = 16;
  std::size_t successor_list_length = 4;
  SimTime one_way_latency{10};
  double loss_prob = 0.0;
  SimTime rpc_timeout{500};
  int rpc_attempts = 2;
  SimTime deadline{5000};
  int join_attempts = 3;
  std::uint64_t seed = 0;

  unsigned hop_cap() const { return 2 * bits; }
};

enum class LookupStatus {
  ok,
  timeout,  // hop cap or deadline exceeded
  failed,   // every known route toward the key is dead
};

std::string_view to_string(LookupStatus status);

struct RouteOptions {
  // Maintenance traffic: no loss draws, no deadline.
  bool lossless = false;
  // The first remote hop is the origin's successor rather than its closest
  // preceding finger (a query "submitted to its successor node").
  bool start_at_successor = false;
  // Consulted at every node the query reaches before its fingers. Returning
  // an id sends the query straight there and makes it the target.
  std::function<std::optional<NodeId>(const RingNode& hop)> divert;
};

struct RouteResult {
  LookupStatus status = LookupStatus::failed;
  NodeId target;   // node that answered (valid when status == ok)
  unsigned hops = 0;  // remote contacts, including failed attempts
  SimTime elapsed{0};
  bool diverted = false;
  std::vector<NodeId> path;  // nodes successfully contacted, in order

  bool ok() const { return status == LookupStatus::ok; }
};

using LookupResult = RouteResult;

struct GetResult {
  RouteResult route;
  std::set<std::string> values;
};

class Overlay {
 public:
  explicit Overlay(OverlayConfig config);

  const OverlayConfig& config() const { return config_; }
  NodeId id(std::uint64_t value) const { return NodeId(value, config_.bits); }

  // --- membership ---
  // Adds a node. With no bootstrap the node must be the first live node.
  // Throws join-failed if the bootstrap is dead or the lookup keeps failing.
  RingNode& join(NodeId new_id, Locator address, std::optional<NodeId> bootstrap);
  void depart(NodeId id, bool graceful);
  // Creates a ring with exact successor lists, predecessors and fingers.
  void build_stable(std::span<const NodeId> ids);

  // --- maintenance ---
  void stabilize_round(NodeId id);
  // One stabilize_round for every live node, in id order.
  void stabilize_all();
  // Points each finger of each live node at a random wrong live node with the
  // given probability. Returns how many entries were changed.
  std::size_t perturb_fingers(double fraction, simnet::Rng& rng);

  // --- routing ---
  LookupResult find_successor(NodeId from, NodeId key);
  // Highest finger strictly inside (node.id, key); node.id when none is.
  NodeId closest_preceding_finger(const RingNode& node, NodeId key) const;
  RouteResult route(NodeId from, NodeId key, const RouteOptions& options);
  // One request/response with `peer`, charged to `acc`. Contacts with the
  // origin itself are free.
  bool contact(NodeId from, NodeId peer, RouteResult& acc, bool lossless);

  // --- storage ---
  RouteResult put(NodeId origin, NodeId key, std::string value, SimTime now);
  GetResult get(NodeId origin, NodeId key);

  // --- inspection ---
  bool alive(NodeId id) const;
  const RingNode& node(NodeId id) const;
  RingNode& node(NodeId id);
  std::vector<NodeId> live_ids() const;
  std::size_t live_count() const { return live_count_; }
  const simnet::Link& fabric() const { return fabric_; }

 private:
  bool deadline_passed(const RouteResult& acc, bool lossless) const;
  std::optional<NodeId> first_successor(const RingNode& n, const std::vector<NodeId>& failed) const;
  NodeId best_preceding(const RingNode& n, NodeId key, const std::vector<NodeId>& failed) const;
  std::vector<FingerEntry> fresh_fingers(NodeId id, NodeId fill) const;
  void rebuild_successor_list(RingNode& n, NodeId head);

  OverlayConfig config_;
  std::map<NodeId, RingNode> nodes_;
  std::size_t live_count_ = 0;
  simnet::Link fabric_;
};

}  // namespace chordmob::chord
