#include "chordmob/msctp.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <ostream>

namespace chordmob::msctp {

using namespace std::chrono_literals;

std::string_view to_string(State s) {
  switch (s) {
    case State::CLOSED: return "CLOSED";
    case State::COOKIE_WAIT: return "COOKIE_WAIT";
    case State::COOKIE_ECHOED: return "COOKIE_ECHOED";
    case State::ESTABLISHED: return "ESTABLISHED";
    case State::SHUTDOWN: return "SHUTDOWN";
  }
  return "?";
}

std::string_view to_string(ChunkKind k) {
  switch (k) {
    case ChunkKind::INIT: return "INIT";
    case ChunkKind::INIT_ACK: return "INIT_ACK";
    case ChunkKind::COOKIE_ECHO: return "COOKIE_ECHO";
    case ChunkKind::COOKIE_ACK: return "COOKIE_ACK";
    case ChunkKind::DATA: return "DATA";
    case ChunkKind::SACK: return "SACK";
    case ChunkKind::ASCONF: return "ASCONF";
    case ChunkKind::ASCONF_ACK: return "ASCONF_ACK";
  }
  return "?";
}

std::string_view to_string(AsconfOp op) {
  switch (op) {
    case AsconfOp::ADD_IP: return "ADD_IP";
    case AsconfOp::DELETE_IP: return "DELETE_IP";
    case AsconfOp::SET_PRIMARY: return "SET_PRIMARY";
  }
  return "?";
}

void ChunkTrace::write_csv(std::ostream& out) const {
  out << kHeader << '\n';
  for (const auto& r : records_) {
    fmt::print(out, "{},{},{},{},{},{},{}\n", r.at.count(), r.direction, to_string(r.kind),
               r.asconf_op ? to_string(*r.asconf_op) : "", r.tsn ? std::to_string(*r.tsn) : "", r.path_index,
               r.bundled ? 1 : 0);
  }
}

void LatencyModel::validate() const {
  for (SimTime t : {t_md, t_ac, t_mn_cn, t_cn_mn, t_pc}) {
    if (t < SimTime{0}) throw Error(Errc::invalid_argument, "latency model durations must be non-negative");
  }
}

LatencyBreakdown breakdown(const LatencyModel& m) {
  LatencyBreakdown b;
  const SimTime rtt = m.t_mn_cn + m.t_cn_mn;
  b.t_add_ip = rtt;
  b.t_pc_ip = rtt;
  b.t_del_ip = rtt;
  b.t_pc = m.t_pc;
  b.t_dar = b.t_add_ip + b.t_pc_ip + b.t_del_ip + b.t_pc;
  b.t_mSCTP = m.t_md + m.t_ac + b.t_dar;
  return b;
}

SimTime predicted_latency(const LatencyModel& m) {
  if (m.bundling) return m.t_pc;
  return 3 * (m.t_mn_cn + m.t_cn_mn) + m.t_pc;
}

// --- Endpoint ---------------------------------------------------------------

Endpoint::Endpoint(std::string name, Fabric& fabric, std::vector<Locator> interfaces, TransportConfig config,
                   ChunkTrace* trace)
    : name_(std::move(name)), fabric_(fabric), cfg_(config), trace_(trace), local_(interfaces) {
  if (interfaces.empty()) throw Error(Errc::invalid_argument, "endpoint needs at least one interface");
  for (const auto& tl : interfaces) attach_interface(tl);
}

void Endpoint::attach_interface(const Locator& tl) {
  interfaces_.insert(tl);
  fabric_.attach(tl, [this](const Locator& src, const Locator& dst, Packet pkt) { receive(src, dst, std::move(pkt)); });
}

void Endpoint::detach_interface(const Locator& tl) {
  interfaces_.erase(tl);
  fabric_.detach(tl);
}

std::size_t Endpoint::index_of_local(const Locator& tl) const {
  auto it = std::find(local_.begin(), local_.end(), tl);
  return static_cast<std::size_t>(it - local_.begin());
}

std::optional<std::size_t> Endpoint::alternate_local() const {
  for (std::size_t i = 0; i < local_.size(); ++i) {
    if (i != primary_local_ && interfaces_.contains(local_[i])) return i;
  }
  return std::nullopt;
}

void Endpoint::transmit(Packet pkt, std::size_t local_idx, const Locator& dst) {
  transmit_from(std::move(pkt), local_.at(local_idx), dst);
}

void Endpoint::transmit_from(Packet pkt, const Locator& src, const Locator& dst) {
  if (!interfaces_.contains(src)) return;  // interface is down: nothing leaves
  const int path = static_cast<int>(index_of_local(src));
  if (trace_) {
    for (const auto& c : pkt.chunks) {
      trace_->record(TraceRecord{sched().now(), name_ + "->" + peer_name_, c.kind, c.asconf_op, c.tsn, path,
                                 c.kind == ChunkKind::ASCONF && c.bundled});
    }
  }
  fabric_.send(src, dst, std::move(pkt));
}

// --- association setup ------------------------------------------------------

void Endpoint::initiate(const Locator& peer) {
  if (state_ != State::CLOSED) throw Error(Errc::invalid_argument, "association already open");
  init_target_ = peer;
  init_attempts_ = 0;
  failure_.reset();
  state_ = State::COOKIE_WAIT;
  send_init();
  arm_init_timer();
}

void Endpoint::send_init() {
  Chunk c;
  c.kind = ChunkKind::INIT;
  c.addresses = local_;
  transmit(Packet{{c}}, primary_local_, init_target_);
}

void Endpoint::send_cookie_echo() {
  Chunk c;
  c.kind = ChunkKind::COOKIE_ECHO;
  transmit(Packet{{c}}, primary_local_, peer_.at(primary_path_));
}

void Endpoint::arm_init_timer() {
  init_timer_ = sched().schedule_in(cfg_.init_rto * (1 << init_attempts_), [this] {
    init_timer_.reset();
    if (state_ != State::COOKIE_WAIT && state_ != State::COOKIE_ECHOED) return;
    if (++init_attempts_ > cfg_.init_retries) {
      fail(Errc::init_timeout);
      return;
    }
    if (state_ == State::COOKIE_WAIT) {
      send_init();
    } else {
      send_cookie_echo();
    }
    arm_init_timer();
  });
}

void Endpoint::become_established() {
  state_ = State::ESTABLISHED;
  if (established_listener_) {
    // Runs after the current packet's replies have gone out.
    sched().schedule_in(0ms, [this] { established_listener_(); });
  }
}

void Endpoint::fail(Errc code) {
  failure_ = code;
  state_ = State::CLOSED;
  if (init_timer_) sched().cancel(*init_timer_);
  init_timer_.reset();
  for (auto& [tsn, o] : outstanding_) sched().cancel(o.timer);
  outstanding_.clear();
  if (asconf_) {
    sched().cancel(asconf_->timer);
    if (asconf_->bundle_timer) sched().cancel(*asconf_->bundle_timer);
  }
  asconf_.reset();
  handover_.reset();
  backlog_.clear();
}

// --- data -------------------------------------------------------------------

void Endpoint::send_data(std::uint32_t payload_len) {
  if (payload_len == 0) throw Error(Errc::invalid_argument, "zero-length payload");
  if (state_ != State::ESTABLISHED) throw Error(Errc::not_established, name_ + " has no established association");
  if (suspended_) {
    backlog_.push_back(payload_len);
    return;
  }
  const std::uint64_t tsn = next_tsn_++;
  outstanding_[tsn].len = payload_len;
  sent_log_.emplace(tsn, std::make_pair(sched().now(), payload_len));
  bytes_sent_ += payload_len;
  send_chunk_now(tsn, false);
  arm_data_timer(tsn, cfg_.rto_initial);
}

void Endpoint::send_chunk_now(std::uint64_t tsn, bool retransmit) {
  const Outstanding& o = outstanding_.at(tsn);
  std::size_t li = primary_local_;
  Locator dst = peer_.at(primary_path_);
  if (retransmit) {
    if (auto alt = alternate_local()) {
      li = *alt;
    } else if (peer_.size() > 1) {
      dst = peer_[(primary_path_ + 1) % peer_.size()];
    }
  }
  Chunk d;
  d.kind = ChunkKind::DATA;
  d.payload_len = o.len;
  d.tsn = tsn;
  Packet pkt{{d}};
  if (!retransmit && asconf_ && !asconf_->sent && asconf_->chunk.bundled) {
    if (asconf_->bundle_timer) sched().cancel(*asconf_->bundle_timer);
    asconf_->bundle_timer.reset();
    asconf_->sent = true;
    pkt.chunks.push_back(asconf_->chunk);
    asconf_->timer = sched().schedule_in(cfg_.rto_initial, [this] { on_asconf_timeout(); });
  }
  transmit(std::move(pkt), li, dst);
}

void Endpoint::arm_data_timer(std::uint64_t tsn, SimTime rto) {
  outstanding_.at(tsn).timer = sched().schedule_in(rto, [this, tsn] { on_data_timeout(tsn); });
}

void Endpoint::on_data_timeout(std::uint64_t tsn) {
  auto it = outstanding_.find(tsn);
  if (it == outstanding_.end() || state_ != State::ESTABLISHED) return;
  const int attempts = ++it->second.attempts;
  ++retransmissions_;
  send_chunk_now(tsn, true);
  arm_data_timer(tsn, std::min(cfg_.rto_initial * (1 << std::min(attempts, 16)), cfg_.rto_max));
}

void Endpoint::suspend() {
  suspended_ = true;
  if (milestones_) milestones_->suspended_at = sched().now();
}

void Endpoint::resume() {
  suspended_ = false;
  if (milestones_) milestones_->resumed_at = sched().now();
  flush_backlog();
}

void Endpoint::flush_backlog() {
  while (!backlog_.empty() && !suspended_ && state_ == State::ESTABLISHED) {
    const std::uint32_t len = backlog_.front();
    backlog_.pop_front();
    send_data(len);
  }
}

// --- receive path -----------------------------------------------------------

void Endpoint::receive(const Locator& src, const Locator& dst, Packet pkt) {
  Packet reply;
  const bool carries_data = std::any_of(pkt.chunks.begin(), pkt.chunks.end(),
                                        [](const Chunk& c) { return c.kind == ChunkKind::DATA; });
  for (const Chunk& c : pkt.chunks) {
    switch (c.kind) {
      case ChunkKind::INIT: {
        peer_ = c.addresses;
        auto it = std::find(peer_.begin(), peer_.end(), src);
        if (it == peer_.end()) it = peer_.insert(peer_.begin(), src);
        primary_path_ = static_cast<std::size_t>(it - peer_.begin());
        Chunk ack;
        ack.kind = ChunkKind::INIT_ACK;
        ack.addresses = local_;
        reply.chunks.push_back(ack);
        break;
      }
      case ChunkKind::INIT_ACK: {
        if (state_ != State::COOKIE_WAIT) break;
        peer_ = c.addresses;
        auto it = std::find(peer_.begin(), peer_.end(), src);
        if (it == peer_.end()) it = peer_.insert(peer_.begin(), src);
        primary_path_ = static_cast<std::size_t>(it - peer_.begin());
        state_ = State::COOKIE_ECHOED;
        if (init_timer_) sched().cancel(*init_timer_);
        init_attempts_ = 0;
        send_cookie_echo();
        arm_init_timer();
        break;
      }
      case ChunkKind::COOKIE_ECHO: {
        if (state_ != State::ESTABLISHED) become_established();
        Chunk ack;
        ack.kind = ChunkKind::COOKIE_ACK;
        reply.chunks.push_back(ack);
        break;
      }
      case ChunkKind::COOKIE_ACK: {
        if (state_ != State::COOKIE_ECHOED) break;
        if (init_timer_) sched().cancel(*init_timer_);
        init_timer_.reset();
        become_established();
        break;
      }
      case ChunkKind::DATA: {
        if (state_ != State::ESTABLISHED || !c.tsn) break;
        if (received_tsns_.insert(*c.tsn).second) {
          bytes_received_ += c.payload_len;
          received_by_path_[src.address] += c.payload_len;
          arrivals_.push_back(Arrival{sched().now(), *c.tsn, c.payload_len, src});
        }
        Chunk sack;
        sack.kind = ChunkKind::SACK;
        sack.tsn = c.tsn;
        reply.chunks.push_back(sack);
        break;
      }
      case ChunkKind::SACK: {
        if (!c.tsn) break;
        if (auto it = outstanding_.find(*c.tsn); it != outstanding_.end()) {
          sched().cancel(it->second.timer);
          bytes_acked_ += it->second.len;
          outstanding_.erase(it);
        }
        break;
      }
      case ChunkKind::ASCONF: {
        if (state_ != State::ESTABLISHED) break;
        if (c.serial > last_peer_serial_) {
          apply_asconf(c);
          last_peer_serial_ = c.serial;
        }
        Chunk ack;
        ack.kind = ChunkKind::ASCONF_ACK;
        ack.asconf_op = c.asconf_op;
        ack.serial = c.serial;
        ack.bundled = carries_data;
        reply.chunks.push_back(ack);
        break;
      }
      case ChunkKind::ASCONF_ACK:
        on_asconf_ack(c);
        break;
    }
  }
  if (!reply.chunks.empty()) transmit_from(std::move(reply), dst, src);
}

void Endpoint::apply_asconf(const Chunk& c) {
  if (!c.asconf_op || c.addresses.empty()) return;
  const Locator& addr = c.addresses.front();
  auto it = std::find(peer_.begin(), peer_.end(), addr);
  switch (*c.asconf_op) {
    case AsconfOp::ADD_IP:
      if (it == peer_.end()) peer_.push_back(addr);
      break;
    case AsconfOp::SET_PRIMARY:
      if (it == peer_.end()) it = peer_.insert(peer_.end(), addr);
      primary_path_ = static_cast<std::size_t>(it - peer_.begin());
      break;
    case AsconfOp::DELETE_IP: {
      if (it == peer_.end() || peer_.size() == 1) break;
      const Locator keep = peer_[primary_path_];
      peer_.erase(it);
      auto k = std::find(peer_.begin(), peer_.end(), keep);
      primary_path_ = k == peer_.end() ? 0 : static_cast<std::size_t>(k - peer_.begin());
      break;
    }
  }
}

// --- handover ---------------------------------------------------------------

bool Endpoint::begin_handover(const Locator& new_tl, const LatencyModel& model) {
  if (state_ != State::ESTABLISHED) throw Error(Errc::not_established, "handover needs an established association");
  model.validate();
  if (local_.at(primary_local_) == new_tl) return false;
  if (handover_) throw Error(Errc::invalid_argument, "handover already in progress");
  if (std::find(local_.begin(), local_.end(), new_tl) != local_.end()) {
    throw Error(Errc::invalid_argument, "locator already part of the association");
  }
  if (!interfaces_.contains(new_tl)) throw Error(Errc::invalid_argument, "interface " + new_tl.to_string() + " is down");

  handover_ = Handover{new_tl, local_[primary_local_], model, 0};
  milestones_ = Milestones{sched().now(), std::nullopt, std::nullopt, std::nullopt, handover_->old_tl, new_tl};
  if (!model.bundling) suspend();
  queue_asconf(AsconfOp::ADD_IP, new_tl);
  return true;
}

void Endpoint::queue_asconf(AsconfOp op, const Locator& addr) {
  PendingAsconf p;
  p.chunk.kind = ChunkKind::ASCONF;
  p.chunk.asconf_op = op;
  p.chunk.serial = next_serial_++;
  p.chunk.addresses = {addr};
  p.chunk.bundled = handover_ && handover_->model.bundling;
  asconf_ = std::move(p);
  if (asconf_->chunk.bundled) {
    asconf_->bundle_timer = sched().schedule_in(cfg_.bundle_wait, [this] {
      if (asconf_ && !asconf_->sent) {
        asconf_->bundle_timer.reset();
        send_asconf_alone();
      }
    });
  } else {
    send_asconf_alone();
  }
}

void Endpoint::send_asconf_alone() {
  if (!asconf_) return;
  if (asconf_->bundle_timer) sched().cancel(*asconf_->bundle_timer);
  asconf_->bundle_timer.reset();
  asconf_->chunk.bundled = false;
  asconf_->sent = true;
  std::size_t li = primary_local_;
  if (asconf_->attempts > 0) li = alternate_local().value_or(primary_local_);
  transmit(Packet{{asconf_->chunk}}, li, peer_.at(primary_path_));
  asconf_->timer = sched().schedule_in(std::min(cfg_.rto_initial * (1 << asconf_->attempts), cfg_.rto_max),
                                       [this] { on_asconf_timeout(); });
}

void Endpoint::on_asconf_timeout() {
  if (!asconf_) return;
  if (++asconf_->attempts > cfg_.asconf_retries) {
    fail(Errc::asconf_timeout);
    return;
  }
  send_asconf_alone();
}

void Endpoint::on_asconf_ack(const Chunk& ack) {
  if (!asconf_ || ack.serial != asconf_->chunk.serial) return;
  sched().cancel(asconf_->timer);
  const Chunk done = asconf_->chunk;
  asconf_.reset();

  const Locator& addr = done.addresses.front();
  switch (*done.asconf_op) {
    case AsconfOp::ADD_IP:
      if (std::find(local_.begin(), local_.end(), addr) == local_.end()) local_.push_back(addr);
      break;
    case AsconfOp::SET_PRIMARY:
      break;
    case AsconfOp::DELETE_IP: {
      const Locator keep = local_[primary_local_];
      std::erase(local_, addr);
      primary_local_ = index_of_local(keep);
      break;
    }
  }
  advance_handover();
}

void Endpoint::advance_handover() {
  if (!handover_) return;
  Handover& h = *handover_;
  const SimTime now = sched().now();
  switch (h.step) {
    case 0:
      h.step = 1;
      queue_asconf(AsconfOp::SET_PRIMARY, h.new_tl);
      break;
    case 1:
      h.step = 2;
      if (h.model.bundling) {
        // Data pauses only while the MN moves transmission to the new interface.
        suspend();
        sched().schedule_in(h.model.t_pc, [this] {
          if (!handover_) return;
          primary_local_ = index_of_local(handover_->new_tl);
          queue_asconf(AsconfOp::DELETE_IP, handover_->old_tl);
          resume();
        });
      } else {
        primary_local_ = index_of_local(h.new_tl);
        queue_asconf(AsconfOp::DELETE_IP, h.old_tl);
      }
      break;
    case 2:
      if (h.model.bundling) {
        milestones_->completed_at = now;
        handover_.reset();
      } else {
        sched().schedule_in(h.model.t_pc, [this] {
          milestones_->completed_at = sched().now();
          handover_.reset();
          resume();
        });
      }
      break;
  }
}

// --- Session ----------------------------------------------------------------

Session::Session(simnet::Scheduler& sched, SessionConfig config)
    : sched_(sched), cfg_(std::move(config)), fabric_(sched, cfg_.link) {
  cn_ = std::make_unique<Endpoint>("CN", fabric_, cfg_.cn_tls, cfg_.transport, &trace_);
  mn_ = std::make_unique<Endpoint>("MN", fabric_, cfg_.mn_tls, cfg_.transport, &trace_);
  cn_->set_peer_name("MN");
  mn_->set_peer_name("CN");
}

void Session::connect() { cn_->initiate(cfg_.mn_tls.front()); }

void Session::establish() {
  connect();
  while (cn_->state() != State::ESTABLISHED && !cn_->failure()) {
    if (sched_.pending() == 0) break;
    sched_.run_until(sched_.now() + simnet::kTick);
  }
  if (cn_->failure()) throw Error(*cn_->failure(), "association setup toward " + cfg_.mn_tls.front().to_string());
}

void Session::stream(std::uint32_t chunk_bytes, SimTime interval, SimTime until) {
  if (chunk_bytes == 0 || interval <= SimTime{0}) throw Error(Errc::invalid_argument, "bad stream parameters");
  sched_.schedule_in(0ms, [=, this] { stream_tick(chunk_bytes, interval, until); });
}

void Session::stream_tick(std::uint32_t chunk_bytes, SimTime interval, SimTime until) {
  if (sched_.now() >= until) return;
  if (mn_->state() == State::ESTABLISHED) mn_->send_data(chunk_bytes);
  if (sched_.now() + interval < until) {
    sched_.schedule_in(interval, [=, this] { stream_tick(chunk_bytes, interval, until); });
  }
}

void Session::enter_overlap(const Locator& new_tl, const LatencyModel& model) {
  model.validate();
  // Movement detection and address configuration run beside the data flow.
  sched_.schedule_in(model.t_md + model.t_ac, [this, new_tl] { mn_->attach_interface(new_tl); });
}

void Session::switch_primary(const Locator& new_tl, const LatencyModel& model) {
  model_ = model;
  noop_ = !mn_->begin_handover(new_tl, model);
}

void Session::leave_overlap(const Locator& old_tl) { mn_->detach_interface(old_tl); }

HandoverReport Session::report() {
  HandoverReport r;
  if (!model_) return r;
  r.predicted = predicted_latency(*model_);
  if (noop_) {
    r.noop = true;
    r.completed = true;
    return r;
  }
  const auto& ms = mn_->last_handover();
  if (!ms) return r;
  r.completed = ms->completed_at.has_value();
  if (ms->suspended_at) {
    const Locator cn_tl = cfg_.cn_tls.front();
    for (const auto& a : cn_->arrivals()) {
      if (a.from == ms->new_tl && a.at >= *ms->suspended_at) {
        r.measured_latency = a.at - *ms->suspended_at - fabric_.link(ms->new_tl, cn_tl).latency();
        break;
      }
    }
  }
  const SimTime end = ms->completed_at.value_or(sched_.now());
  for (const auto& [tsn, sent] : mn_->sent_log()) {
    if (sent.first >= ms->decided_at && sent.first <= end && !cn_->received(tsn)) r.lost_bytes += sent.second;
  }
  return r;
}

}  // namespace chordmob::msctp
