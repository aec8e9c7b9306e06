#pragma once

// mSCTP-style transport: four-way association setup, multihomed DATA with a
// SACK per chunk, and soft handover through ASCONF (ADD_IP, SET_PRIMARY,
// DELETE_IP). Everything advances through scheduler events on a simnet
// fabric; nothing here blocks.

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chordmob/error.hpp"
#include "chordmob/ident.hpp"
#include "chordmob/simnet.hpp"

namespace chordmob::msctp {

using simnet::SimTime;

enum class State { CLOSED, COOKIE_WAIT, COOKIE_ECHOED, ESTABLISHED, SHUTDOWN };
enum class ChunkKind { INIT, INIT_ACK, COOKIE_ECHO, COOKIE_ACK, DATA, SACK, ASCONF, ASCONF_ACK };
enum class AsconfOp { ADD_IP, DELETE_IP, SET_PRIMARY };

std::string_view to_string(State s);
std::string_view to_string(ChunkKind k);
std::string_view to_string(AsconfOp op);

struct Chunk {
  ChunkKind kind = ChunkKind::DATA;
  std::optional<AsconfOp> asconf_op;
  std::uint32_t payload_len = 0;
  std::optional<std::uint64_t> tsn;  // DATA: its TSN; SACK: the TSN acknowledged
  std::uint64_t serial = 0;          // ASCONF / ASCONF_ACK correlation
  bool bundled = false;
  std::vector<Locator> addresses;    // INIT / INIT_ACK: advertised TLs; ASCONF: the parameter
};

struct Packet {
  std::vector<Chunk> chunks;
};

using Fabric = simnet::Network<Packet>;

struct TraceRecord {
  SimTime at{0};
  std::string direction;  // "<sender>-><receiver>"
  ChunkKind kind = ChunkKind::DATA;
  std::optional<AsconfOp> asconf_op;
  std::optional<std::uint64_t> tsn;
  int path_index = 0;  // sender's interface index within its association
  bool bundled = false;
};

class ChunkTrace {
 public:
  static constexpr const char* kHeader = "sim_time_ms,direction,kind,asconf_op,tsn,path_index,bundled";

  void record(TraceRecord r) { records_.push_back(std::move(r)); }
  const std::vector<TraceRecord>& records() const { return records_; }
  void write_csv(std::ostream& out) const;

 private:
  std::vector<TraceRecord> records_;
};

struct TransportConfig {
  SimTime rto_initial{200};
  SimTime rto_max{3200};
  SimTime init_rto{1000};
  int init_retries = 4;
  int asconf_retries = 4;
  // How long an ASCONF waits for DATA to ride on before going alone.
  SimTime bundle_wait{50};
};

// Closed-form handover latency terms.
struct LatencyModel {
  SimTime t_md{0};
  SimTime t_ac{0};
  SimTime t_mn_cn{10};
  SimTime t_cn_mn{10};
  SimTime t_pc{50};
  bool bundling = true;

  void validate() const;  // every duration >= 0
};

struct LatencyBreakdown {
  SimTime t_add_ip{0};
  SimTime t_pc_ip{0};
  SimTime t_del_ip{0};
  SimTime t_pc{0};
  SimTime t_dar{0};     // add + pc-ip + del + pc
  SimTime t_mSCTP{0};   // t_md + t_ac + t_dar
};

LatencyBreakdown breakdown(const LatencyModel& model);
// 3(t_mn_cn + t_cn_mn) + t_pc without bundling, t_pc with it.
SimTime predicted_latency(const LatencyModel& model);

struct Arrival {
  SimTime at{0};
  std::uint64_t tsn = 0;
  std::uint32_t len = 0;
  Locator from;
};

// One side of one association.
class Endpoint {
 public:
  using Listener = std::function<void()>;

  Endpoint(std::string name, Fabric& fabric, std::vector<Locator> interfaces, TransportConfig config,
           ChunkTrace* trace);
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  // Label used for the direction column of the chunk trace.
  void set_peer_name(std::string name) { peer_name_ = std::move(name); }

  // Active open toward the peer's TL. Completion is observable through
  // state() / failure() and the on_established listener.
  void initiate(const Locator& peer);
  void on_established(Listener l) { established_listener_ = std::move(l); }

  // Queues payload_len bytes; sent at once unless data is suspended.
  // Throws invalid-argument for an empty payload, not-established otherwise.
  void send_data(std::uint32_t payload_len);

  // Physical interfaces (not association membership).
  void attach_interface(const Locator& tl);
  void detach_interface(const Locator& tl);
  bool has_interface(const Locator& tl) const { return interfaces_.contains(tl); }

  // Starts the DAR sequence moving the primary to new_tl. Returns false for
  // the no-op case (new_tl already primary).
  bool begin_handover(const Locator& new_tl, const LatencyModel& model);
  bool handover_active() const { return handover_.has_value(); }

  State state() const { return state_; }
  std::optional<Errc> failure() const { return failure_; }
  const std::string& name() const { return name_; }
  const std::vector<Locator>& local_tls() const { return local_; }
  const std::vector<Locator>& peer_tls() const { return peer_; }
  std::size_t primary_path() const { return primary_path_; }
  const Locator& primary_local() const { return local_.at(primary_local_); }

  std::uint64_t bytes_sent() const { return bytes_sent_; }
  std::uint64_t bytes_acked() const { return bytes_acked_; }
  std::uint64_t bytes_received() const { return bytes_received_; }
  std::uint64_t retransmissions() const { return retransmissions_; }
  const std::map<std::uint32_t, std::uint64_t>& received_by_path() const { return received_by_path_; }
  const std::vector<Arrival>& arrivals() const { return arrivals_; }
  bool received(std::uint64_t tsn) const { return received_tsns_.contains(tsn); }
  // First-transmission time and length of every TSN this side sent.
  const std::map<std::uint64_t, std::pair<SimTime, std::uint32_t>>& sent_log() const { return sent_log_; }

  // Handover milestones on the sending side.
  struct Milestones {
    SimTime decided_at{0};
    std::optional<SimTime> suspended_at;
    std::optional<SimTime> resumed_at;
    std::optional<SimTime> completed_at;
    Locator old_tl;
    Locator new_tl;
  };
  const std::optional<Milestones>& last_handover() const { return milestones_; }

 private:
  struct Outstanding {
    std::uint32_t len = 0;
    int attempts = 0;
    simnet::EventId timer = 0;
  };
  struct PendingAsconf {
    Chunk chunk;
    bool sent = false;
    int attempts = 0;
    simnet::EventId timer = 0;
    std::optional<simnet::EventId> bundle_timer;
  };
  struct Handover {
    Locator new_tl;
    Locator old_tl;
    LatencyModel model;
    int step = 0;  // index of the ASCONF in flight: 0 add, 1 set-primary, 2 delete
  };

  simnet::Scheduler& sched() { return fabric_.scheduler(); }
  void receive(const Locator& src, const Locator& dst, Packet pkt);
  void transmit(Packet pkt, std::size_t local_idx, const Locator& dst);
  void transmit_from(Packet pkt, const Locator& src, const Locator& dst);
  void send_chunk_now(std::uint64_t tsn, bool retransmit);
  void arm_data_timer(std::uint64_t tsn, SimTime rto);
  void on_data_timeout(std::uint64_t tsn);
  void send_init();
  void send_cookie_echo();
  void arm_init_timer();
  void fail(Errc code);
  void become_established();

  void queue_asconf(AsconfOp op, const Locator& addr);
  void send_asconf_alone();
  void on_asconf_timeout();
  void on_asconf_ack(const Chunk& ack);
  void apply_asconf(const Chunk& c);
  void advance_handover();
  void suspend();
  void resume();
  void flush_backlog();

  std::optional<std::size_t> alternate_local() const;
  std::size_t index_of_local(const Locator& tl) const;

  std::string name_;
  std::string peer_name_ = "peer";
  Fabric& fabric_;
  TransportConfig cfg_;
  ChunkTrace* trace_;

  std::set<Locator> interfaces_;
  std::vector<Locator> local_;
  std::vector<Locator> peer_;
  std::size_t primary_path_ = 0;
  std::size_t primary_local_ = 0;
  State state_ = State::CLOSED;
  std::optional<Errc> failure_;
  Listener established_listener_;

  Locator init_target_;
  int init_attempts_ = 0;
  std::optional<simnet::EventId> init_timer_;

  std::uint64_t next_tsn_ = 1;
  std::map<std::uint64_t, Outstanding> outstanding_;
  std::deque<std::uint32_t> backlog_;
  bool suspended_ = false;
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t bytes_acked_ = 0;
  std::uint64_t retransmissions_ = 0;
  std::map<std::uint64_t, std::pair<SimTime, std::uint32_t>> sent_log_;

  std::set<std::uint64_t> received_tsns_;
  std::uint64_t bytes_received_ = 0;
  std::map<std::uint32_t, std::uint64_t> received_by_path_;
  std::vector<Arrival> arrivals_;

  std::uint64_t next_serial_ = 1;
  std::optional<PendingAsconf> asconf_;
  std::uint64_t last_peer_serial_ = 0;
  std::optional<Handover> handover_;
  std::optional<Milestones> milestones_;
};

struct HandoverReport {
  bool noop = false;
  bool completed = false;
  SimTime measured_latency{0};
  std::uint64_t lost_bytes = 0;
  SimTime predicted{0};
};

struct SessionConfig {
  simnet::LinkModel link;
  TransportConfig transport;
  std::vector<Locator> cn_tls;
  std::vector<Locator> mn_tls;  // interfaces attached at start
};

// A CN/MN pair: the CN opens the association to the MN's first TL and the MN
// streams DATA to the CN.
class Session {
 public:
  Session(simnet::Scheduler& sched, SessionConfig config);

  Endpoint& cn() { return *cn_; }
  Endpoint& mn() { return *mn_; }
  const Endpoint& cn() const { return *cn_; }
  const Endpoint& mn() const { return *mn_; }
  Fabric& fabric() { return fabric_; }
  ChunkTrace& trace() { return trace_; }

  void connect();
  // connect(), then runs the scheduler until the CN is established.
  // Throws init-timeout when the handshake gives up.
  void establish();

  // Fixed-rate MN->CN stream: one chunk of chunk_bytes every interval, from
  // the current time while t < until.
  void stream(std::uint32_t chunk_bytes, SimTime interval, SimTime until);

  // Mobility hooks. The new interface comes up t_md + t_ac after entering
  // the overlap, while data keeps flowing on the old one.
  void enter_overlap(const Locator& new_tl, const LatencyModel& model);
  void switch_primary(const Locator& new_tl, const LatencyModel& model);
  void leave_overlap(const Locator& old_tl);

  // Derived from what the CN actually received; call once the run is over.
  HandoverReport report();

 private:
  void stream_tick(std::uint32_t chunk_bytes, SimTime interval, SimTime until);

  simnet::Scheduler& sched_;
  SessionConfig cfg_;
  Fabric fabric_;
  ChunkTrace trace_;
  std::unique_ptr<Endpoint> cn_;
  std::unique_ptr<Endpoint> mn_;
  std::optional<LatencyModel> model_;
  bool noop_ = false;
};

}  // namespace chordmob::msctp
