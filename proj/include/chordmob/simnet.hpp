#pragma once

// Deterministic discrete-event kernel: virtual clock, seeded loss, and the
// scripted mobility / churn inputs that drive the experiments.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "chordmob/error.hpp"
#include "chordmob/ident.hpp"

namespace chordmob::simnet {

// One tick is one millisecond of simulated time.
using SimTime = std::chrono::milliseconds;
inline constexpr SimTime kTick{1};

using EventId = std::uint64_t;

class Scheduler {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }

  // Scheduling into the past is rejected: the clock never moves backward.
  EventId schedule_at(SimTime fire_at, Action action);
  EventId schedule_in(SimTime delay, Action action) { return schedule_at(now_ + delay, std::move(action)); }
  void cancel(EventId id);

  // Runs every event with fire_at <= limit in (fire_at, seq) order and leaves
  // the clock at limit. Returns the number of events executed.
  std::size_t run_until(SimTime limit);
  // Drains the queue completely.
  std::size_t run();

  // Cancelled events still count here until their fire time passes.
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Event {
    SimTime fire_at;
    EventId seq;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.fire_at != b.fire_at ? a.fire_at > b.fire_at : a.seq > b.seq;
    }
  };

  bool pop_and_run();

  SimTime now_{0};
  EventId next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
};

// --- randomness -------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);
// Independent stream seed for a named consumer (a link, a churn draw, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);
// Uniform draw in [0, 1) that depends only on (seed, index).
double unit_draw(std::uint64_t seed, std::uint64_t index);

using Rng = std::mt19937_64;
inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

// --- links ------------------------------------------------------------------

struct LinkModel {
  SimTime one_way_latency{10};
  double loss_prob = 0.0;
  std::uint64_t rng_seed = 0;
};

// Counts traffic on one directed link. The n-th message is lost iff
// unit_draw(rng_seed, n) < loss_prob, so a run can be replayed exactly.
class Link {
 public:
  explicit Link(LinkModel model);

  const LinkModel& model() const { return model_; }
  SimTime latency() const { return model_.one_way_latency; }

  // Draws the loss decision for the next message. Returns true when the
  // message survives; the caller must later call delivered() or lost_in_flight().
  bool admit();
  void delivered() { ++delivered_; }
  void lost_in_flight() { ++dropped_; }

  // Synchronous transfer used by request/response accounting: admit + deliver.
  bool transmit();

  // Schedules on_deliver at now + latency unless the message is lost.
  bool send(Scheduler& sched, std::function<void()> on_deliver);

  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered_count() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  LinkModel model_;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
};

// Message fabric between locators. Directed links are created on first use
// from the default model, each with its own seed derived from the endpoints,
// and can be overridden per (src, dst) pair.
template <class Msg>
class Network {
 public:
  using Handler = std::function<void(const Locator& src, const Locator& dst, Msg msg)>;

  Network(Scheduler& sched, LinkModel defaults) : sched_(sched), defaults_(defaults) {}

  Scheduler& scheduler() { return sched_; }

  void attach(const Locator& at, Handler handler) { handlers_[at.address] = std::move(handler); }
  void detach(const Locator& at) { handlers_.erase(at.address); }
  bool attached(const Locator& at) const { return handlers_.contains(at.address); }

  void set_link(const Locator& src, const Locator& dst, LinkModel model) {
    links_.insert_or_assign(key(src, dst), Link(model));
  }

  Link& link(const Locator& src, const Locator& dst) {
    auto k = key(src, dst);
    auto it = links_.find(k);
    if (it == links_.end()) {
      LinkModel m = defaults_;
      m.rng_seed = derive_seed(defaults_.rng_seed, "link", (std::uint64_t{src.address} << 32) | dst.address);
      it = links_.emplace(k, Link(m)).first;
    }
    return it->second;
  }

  // Returns false when the message is lost on the wire. A message whose
  // destination is detached at arrival time is also counted as dropped.
  bool send(const Locator& src, const Locator& dst, Msg msg) {
    Link& l = link(src, dst);
    if (!l.admit()) return false;
    auto k = key(src, dst);
    sched_.schedule_in(l.latency(), [this, k, src, dst, msg = std::move(msg)]() mutable {
      Link& lk = links_.at(k);
      auto it = handlers_.find(dst.address);
      if (it == handlers_.end()) {
        lk.lost_in_flight();
        return;
      }
      lk.delivered();
      it->second(src, dst, std::move(msg));
    });
    return true;
  }

  std::uint64_t total_sent() const { return sum(&Link::sent); }
  std::uint64_t total_delivered() const { return sum(&Link::delivered_count); }
  std::uint64_t total_dropped() const { return sum(&Link::dropped); }

 private:
  static std::pair<std::uint32_t, std::uint32_t> key(const Locator& s, const Locator& d) {
    return {s.address, d.address};
  }
  std::uint64_t sum(std::uint64_t (Link::*field)() const) const {
    std::uint64_t total = 0;
    for (const auto& [k, l] : links_) total += (l.*field)();
    return total;
  }

  Scheduler& sched_;
  LinkModel defaults_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, Link> links_;
  std::map<std::uint32_t, Handler> handlers_;
};

// --- scripted inputs --------------------------------------------------------

struct MobilityScript {
  SimTime t_enter_overlap{0};
  SimTime t_switch{0};
  SimTime t_leave_overlap{0};
  int network1_id = 1;
  int network2_id = 2;
  Locator tl1;  // issued by network 1
  Locator tl2;  // issued by network 2 on entering the overlap

  // Throws invalid-argument unless t_enter < t_switch < t_leave, the two
  // networks differ and they issued different addresses.
  void validate() const;
};

enum class HandoverPhase { attached, overlap, switched, left };
std::string_view to_string(HandoverPhase phase);

struct MobilityHooks {
  std::function<void()> enter_overlap;
  std::function<void()> switch_primary;
  std::function<void()> leave_overlap;
};

// Fires the three hooks at the scripted instants, tracking the MN's phase.
class MobilityDriver {
 public:
  MobilityDriver(Scheduler& sched, MobilityScript script, MobilityHooks hooks);

  // Schedules the script. Throws stale-phase if the MN already left network 1
  // (the script was applied before) and invalid-argument for a bad script.
  void apply();

  HandoverPhase phase() const { return phase_; }
  const MobilityScript& script() const { return script_; }

 private:
  void advance(HandoverPhase expected_from, HandoverPhase to, const std::function<void()>& hook);

  Scheduler& sched_;
  MobilityScript script_;
  MobilityHooks hooks_;
  HandoverPhase phase_ = HandoverPhase::attached;
  bool applied_ = false;
};

struct ChurnStep {
  enum class Action { add_nodes, remove_nodes };
  SimTime at{0};
  Action action = Action::remove_nodes;
  int count = 1;
  bool graceful = false;

  friend bool operator==(const ChurnStep&, const ChurnStep&) = default;
};

struct ChurnSchedule {
  std::vector<ChurnStep> steps;

  // Steps must be time-ordered with positive counts, and the population may
  // never be scheduled below one node.
  void validate(int initial_population) const;

  friend bool operator==(const ChurnSchedule&, const ChurnSchedule&) = default;
};

}  // namespace chordmob::simnet
