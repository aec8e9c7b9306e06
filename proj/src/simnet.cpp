#include "chordmob/simnet.hpp"

#include <string>

namespace chordmob::simnet {

EventId Scheduler::schedule_at(SimTime fire_at, Action action) {
  if (fire_at < now_) throw Error(Errc::invalid_argument, "event scheduled in the past");
  const EventId id = next_seq_++;
  queue_.push(Event{fire_at, id, std::move(action)});
  return id;
}

void Scheduler::cancel(EventId id) {
  if (id < next_seq_) cancelled_.insert(id);
}

bool Scheduler::pop_and_run() {
  // priority_queue::top is const; the action is moved out before pop.
  Event ev = std::move(const_cast<Event&>(queue_.top()));
  queue_.pop();
  if (cancelled_.erase(ev.seq) > 0) return false;
  now_ = ev.fire_at;
  ev.action();
  ++executed_;
  return true;
}

std::size_t Scheduler::run_until(SimTime limit) {
  std::size_t count = 0;
  while (!queue_.empty() && queue_.top().fire_at <= limit) {
    if (pop_and_run()) ++count;
  }
  if (limit > now_) now_ = limit;
  return count;
}

std::size_t Scheduler::run() {
  std::size_t count = 0;
  while (!queue_.empty()) {
    if (pop_and_run()) ++count;
  }
  return count;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  // FNV-1a over the stream name, then mixed with seed and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double unit_draw(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t bits = splitmix64(seed ^ splitmix64(index));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

Link::Link(LinkModel model) : model_(model) {
  if (model.loss_prob < 0.0 || model.loss_prob > 1.0) throw Error(Errc::invalid_argument, "loss_prob outside [0,1]");
  if (model.one_way_latency < SimTime{0}) throw Error(Errc::invalid_argument, "negative link latency");
}

bool Link::admit() {
  const std::uint64_t index = sent_++;
  if (model_.loss_prob > 0.0 && unit_draw(model_.rng_seed, index) < model_.loss_prob) {
    ++dropped_;
    return false;
  }
  return true;
}

bool Link::transmit() {
  if (!admit()) return false;
  ++delivered_;
  return true;
}

bool Link::send(Scheduler& sched, std::function<void()> on_deliver) {
  if (!admit()) return false;
  sched.schedule_in(latency(), [this, fn = std::move(on_deliver)] {
    ++delivered_;
    fn();
  });
  return true;
}

void MobilityScript::validate() const {
  if (!(t_enter_overlap < t_switch && t_switch < t_leave_overlap)) {
    throw Error(Errc::invalid_argument, "mobility script requires t_enter_overlap < t_switch < t_leave_overlap");
  }
  if (network1_id == network2_id) throw Error(Errc::invalid_argument, "mobility script needs two distinct networks");
  if (tl1.address == tl2.address) throw Error(Errc::invalid_argument, "both networks issued the same address");
  if (tl1.network_id != network1_id || tl2.network_id != network2_id) {
    throw Error(Errc::invalid_argument, "locator network tags do not match the script");
  }
}

std::string_view to_string(HandoverPhase phase) {
  switch (phase) {
    case HandoverPhase::attached: return "attached";
    case HandoverPhase::overlap: return "overlap";
    case HandoverPhase::switched: return "switched";
    case HandoverPhase::left: return "left";
  }
  return "unknown";
}

MobilityDriver::MobilityDriver(Scheduler& sched, MobilityScript script, MobilityHooks hooks)
    : sched_(sched), script_(script), hooks_(std::move(hooks)) {}

void MobilityDriver::apply() {
  if (applied_ || phase_ != HandoverPhase::attached) {
    throw Error(Errc::stale_phase, "mobility script already applied (phase " + std::string(to_string(phase_)) + ")");
  }
  script_.validate();
  if (script_.t_enter_overlap < sched_.now()) throw Error(Errc::invalid_argument, "mobility script starts in the past");
  applied_ = true;
  sched_.schedule_at(script_.t_enter_overlap,
                     [this] { advance(HandoverPhase::attached, HandoverPhase::overlap, hooks_.enter_overlap); });
  sched_.schedule_at(script_.t_switch,
                     [this] { advance(HandoverPhase::overlap, HandoverPhase::switched, hooks_.switch_primary); });
  sched_.schedule_at(script_.t_leave_overlap,
                     [this] { advance(HandoverPhase::switched, HandoverPhase::left, hooks_.leave_overlap); });
}

void MobilityDriver::advance(HandoverPhase expected_from, HandoverPhase to, const std::function<void()>& hook) {
  if (phase_ != expected_from) {
    throw Error(Errc::stale_phase, std::string("cannot move from ") + std::string(to_string(phase_)) + " to " +
                                       std::string(to_string(to)));
  }
  phase_ = to;
  if (hook) hook();
}

void ChurnSchedule::validate(int initial_population) const {
  if (initial_population < 1) throw Error(Errc::invalid_argument, "initial population must be >= 1");
  int population = initial_population;
  SimTime last{0};
  for (const auto& step : steps) {
    if (step.at < last) throw Error(Errc::invalid_argument, "churn steps must be time-ordered");
    if (step.count < 1) throw Error(Errc::invalid_argument, "churn step count must be >= 1");
    last = step.at;
    population += step.action == ChurnStep::Action::add_nodes ? step.count : -step.count;
    if (population < 1) throw Error(Errc::invalid_argument, "churn schedule drops the ring below one node");
  }
}

}  // namespace chordmob::simnet
