#pragma once

// Location manager on top of the Chord overlay. A mobile node (MN) publishes
// its UID -> TL mapping at the base node (BN) responsible for hash(UID); the
// BN plants successor pointers at its next k successors so that queries
// passing through them jump straight to it. When the MN moves, the new BN
// tells the old one to redirect queries until the old state times out.
//
// All soft state carries an absolute expiry in simulated time; nothing is
// followed once expired, and expire() purges it.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chordmob/chord.hpp"
#include "chordmob/ident.hpp"
#include "chordmob/simnet.hpp"

namespace chordmob::location {

using simnet::SimTime;

struct LocatorRecord {
  Uid uid;
  NodeId key;
  std::vector<Locator> tls;  // first = primary
  Locator owner_addr;
  SimTime published_at{0};
  SimTime expires_at{0};
};

struct SuccessorPointer {
  NodeId key;
  NodeId base_node;
  SimTime expires_at{0};
};

struct RedirectEntry {
  NodeId key;
  NodeId new_base;
  SimTime expires_at{0};
};

enum class MessageKind { PUBLISH, PUBLISH_ACK, UPDATE, UPDATE_ACK, QUERY, QUERY_REDIRECT, POINTER_INSTALL, TL_REPLY };
std::string_view to_string(MessageKind kind);

struct MessageEvent {
  SimTime at{0};
  MessageKind kind;
  NodeId from;
  NodeId to;
};

struct LocationConfig {
  SimTime record_ttl{30000};
  SimTime pointer_ttl{15000};
  SimTime redirect_ttl{30000};
  SimTime refresh_period{10000};
  std::size_t pointer_fanout = 3;
  bool use_pointers = true;
  bool refresh_pointers = true;
};

enum class UpdatePhase { enter_overlap, switch_primary, leave_overlap };
std::string_view to_string(UpdatePhase phase);

struct ResolveResult {
  std::vector<Locator> tls;
  NodeId answered_by;
  unsigned hops = 0;
  SimTime elapsed{0};
  bool via_pointer = false;
  bool via_redirect = false;
  std::vector<NodeId> path;
};

struct RefreshOutcome {
  bool acked = false;
  NodeId base_node;
};

// What the MN itself remembers about its registration.
struct Registration {
  Uid uid;
  NodeId key;
  NodeId mn;
  NodeId base_node;
  std::optional<NodeId> previous_base;
  std::vector<Locator> tls;
  int phase = 0;  // 0 attached, then one step per UpdatePhase
};

class LocationService {
 public:
  LocationService(chord::Overlay& overlay, LocationConfig config);

  const LocationConfig& config() const { return config_; }
  void set_use_pointers(bool on) { config_.use_pointers = on; }
  void set_refresh_pointers(bool on) { config_.refresh_pointers = on; }

  // Stores the record at successor(hash(uid)) and installs its pointers.
  // Throws publish-failed when the lookup does not complete.
  NodeId publish(NodeId mn, const Uid& uid, const Locator& tl, SimTime now);

  // Extends the record at the current BN; re-publishes if the BN does not ack.
  RefreshOutcome refresh(NodeId mn, const Uid& uid, SimTime now);

  // Query submitted to the CN's successor and routed toward hash(uid),
  // jumping along the first live pointer it meets. Throws not-found or
  // lookup-timeout.
  ResolveResult resolve(NodeId cn, const Uid& uid, SimTime now);
  // Query sent straight to a base node the CN already knows about.
  ResolveResult resolve_at(NodeId cn, NodeId base, const Uid& uid, SimTime now);

  // Drives the three-phase location update. Phases must come in order;
  // otherwise stale-phase is thrown.
  void handover_update(NodeId mn, const Uid& uid, const Locator& new_tl, UpdatePhase phase, SimTime now);

  // Removes every record, pointer and redirect with expires_at <= now.
  std::size_t expire(SimTime now);

  const Registration* registration(const Uid& uid) const;
  const LocatorRecord* record_at(NodeId node, NodeId key) const;
  const SuccessorPointer* pointer_at(NodeId node, NodeId key) const;
  const RedirectEntry* redirect_at(NodeId node, NodeId key) const;
  // Nodes holding a record for key (dead nodes excluded), in id order.
  std::vector<NodeId> record_holders(NodeId key) const;

  // Plants a pointer directly; used to reproduce hand-drawn topologies.
  void install_pointer(NodeId at, NodeId key, NodeId base, SimTime now);

  const std::vector<MessageEvent>& messages() const { return messages_; }
  void clear_messages() { messages_.clear(); }
  NodeId key_of(const Uid& uid) const;

 private:
  struct Tables {
    std::map<NodeId, LocatorRecord> records;
    std::map<NodeId, SuccessorPointer> pointers;
    std::map<NodeId, RedirectEntry> redirects;
  };

  NodeId publish_tls(NodeId mn, const Uid& uid, std::vector<Locator> tls, SimTime now);
  void store_record(NodeId bn, const Uid& uid, std::vector<Locator> tls, SimTime now);
  void install_pointers(NodeId bn, NodeId key, SimTime now);
  ResolveResult answer(NodeId cn, NodeId at, NodeId key, chord::RouteResult route, SimTime now);
  void log(SimTime at, MessageKind kind, NodeId from, NodeId to);
  Registration& require_registration(const Uid& uid);

  chord::Overlay& overlay_;
  LocationConfig config_;
  std::map<NodeId, Tables> tables_;
  std::map<std::string, Registration> registrations_;
  std::vector<MessageEvent> messages_;
};

}  // namespace chordmob::location
