#include <fstream>
#include <set>
#include <sstream>

#include "chordmob/error.hpp"
#include "chordmob/harness.hpp"
#include "json.hpp"

namespace chordmob::harness {

using nlohmann::json;

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::handover: return "handover";
    case Experiment::lookup_scaling: return "lookup_scaling";
    case Experiment::churn: return "churn";
    case Experiment::custom: return "custom";
  }
  return "?";
}

Experiment parse_experiment(std::string_view name) {
  for (auto e : {Experiment::handover, Experiment::lookup_scaling, Experiment::churn, Experiment::custom}) {
    if (name == to_string(e)) return e;
  }
  throw Error(Errc::config_invalid, "unknown experiment '" + std::string(name) + "'");
}

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw Error(Errc::config_invalid, std::string(field) + ": " + why);
}

std::string_view to_string(simnet::ChurnStep::Action a) {
  return a == simnet::ChurnStep::Action::add_nodes ? "add_nodes" : "remove_nodes";
}

// Every scalar field, in file order.
template <class Visitor>
void visit_fields(ScenarioConfig& c, Visitor&& v) {
  v("m", c.m);
  v("node_counts", c.node_counts);
  v("queries_per_point", c.queries_per_point);
  v("values_per_key", c.values_per_key);
  v("seed", c.seed);
  v("seeds", c.seeds);
  v("link_latency_ms", c.link_latency_ms);
  v("loss_prob", c.loss_prob);
  v("rpc_timeout_ms", c.rpc_timeout_ms);
  v("successor_list_length", c.successor_list_length);
  v("stabilization", c.stabilization);
  v("stabilize_interval_ms", c.stabilize_interval_ms);
  v("stale_finger_fraction", c.stale_finger_fraction);
  v("query_deadline_ms", c.query_deadline_ms);
  v("record_ttl_ms", c.record_ttl_ms);
  v("pointer_ttl_ms", c.pointer_ttl_ms);
  v("redirect_ttl_ms", c.redirect_ttl_ms);
  v("refresh_period_ms", c.refresh_period_ms);
  v("t_md_ms", c.t_md_ms);
  v("t_ac_ms", c.t_ac_ms);
  v("t_mn_cn_ms", c.t_mn_cn_ms);
  v("t_cn_mn_ms", c.t_cn_mn_ms);
  v("t_pc_ms", c.t_pc_ms);
  v("bundling", c.bundling);
  v("duration_ms", c.duration_ms);
  v("t_enter_overlap_ms", c.t_enter_overlap_ms);
  v("t_switch_ms", c.t_switch_ms);
  v("t_leave_overlap_ms", c.t_leave_overlap_ms);
  v("chunk_bytes", c.chunk_bytes);
  v("send_interval_ms", c.send_interval_ms);
  v("sample_interval_ms", c.sample_interval_ms);
  v("graceful_removal", c.graceful_removal);
}

template <class T>
void read_as(const json& j, const char* field, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      require(j.is_boolean(), field, "expected a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      require(j.is_number(), field, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      require(j.is_number_integer(), field, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) require(j.get<std::int64_t>() >= 0 || j.is_number_unsigned(), field, "negative");
    }
    out = j.get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::config_invalid, std::string(field) + ": " + e.what());
  }
}

}  // namespace

msctp::LatencyModel ScenarioConfig::latency_model() const {
  return msctp::LatencyModel{SimTime(t_md_ms),     SimTime(t_ac_ms), SimTime(t_mn_cn_ms),
                             SimTime(t_cn_mn_ms), SimTime(t_pc_ms), bundling};
}

void ScenarioConfig::validate() const {
  require(m >= 1 && m <= 64, "m", "must be in 1..64");
  require(!node_counts.empty(), "node_counts", "must not be empty");
  for (int n : node_counts) {
    require(n >= 1, "node_counts", "every count must be >= 1");
    require(m >= 63 || static_cast<std::uint64_t>(n) <= (std::uint64_t{1} << m), "node_counts", "exceeds 2^m");
  }
  require(queries_per_point >= 1, "queries_per_point", "must be >= 1");
  require(values_per_key >= 1, "values_per_key", "must be >= 1");
  require(seeds >= 1, "seeds", "must be >= 1");
  require(link_latency_ms >= 0, "link_latency_ms", "must be >= 0");
  require(loss_prob >= 0.0 && loss_prob <= 1.0, "loss_prob", "must be in [0, 1]");
  require(rpc_timeout_ms > 0, "rpc_timeout_ms", "must be > 0");
  require(successor_list_length >= 1, "successor_list_length", "must be >= 1");
  require(stabilize_interval_ms > 0, "stabilize_interval_ms", "must be > 0");
  require(stale_finger_fraction >= 0.0 && stale_finger_fraction <= 1.0, "stale_finger_fraction", "must be in [0, 1]");
  require(query_deadline_ms > 0, "query_deadline_ms", "must be > 0");
  require(refresh_period_ms > 0 && refresh_period_ms < pointer_ttl_ms, "refresh_period_ms", "must be in (0, pointer_ttl)");
  require(pointer_ttl_ms <= record_ttl_ms, "pointer_ttl_ms", "must not exceed record_ttl");
  require(redirect_ttl_ms > 0, "redirect_ttl_ms", "must be > 0");
  for (auto t : {t_md_ms, t_ac_ms, t_mn_cn_ms, t_cn_mn_ms, t_pc_ms}) require(t >= 0, "latency model", "durations must be >= 0");
  require(duration_ms >= 0, "duration_ms", "must be >= 0");
  require(chunk_bytes >= 1, "chunk_bytes", "must be >= 1");
  require(send_interval_ms > 0, "send_interval_ms", "must be > 0");
  require(sample_interval_ms > 0, "sample_interval_ms", "must be > 0");

  if (experiment == Experiment::handover) {
    require(node_counts.front() >= 2, "node_counts", "handover needs at least two overlay nodes");
    require(t_enter_overlap_ms < t_switch_ms && t_switch_ms < t_leave_overlap_ms, "t_switch_ms",
            "need t_enter_overlap < t_switch < t_leave_overlap");
    require(t_enter_overlap_ms + t_md_ms + t_ac_ms < t_switch_ms, "t_switch_ms",
            "the new address must be configured before the switch");
  }
  if (experiment == Experiment::churn) {
    require(duration_ms > 0, "duration_ms", "churn needs a positive duration");
  }
  if (experiment == Experiment::custom) {
    require(duration_ms > 0, "duration_ms", "custom needs a positive duration");
    try {
      churn_schedule.validate(node_counts.front());
    } catch (const Error& e) {
      throw Error(Errc::config_invalid, std::string("churn_schedule: ") + e.what());
    }
    for (const auto& s : churn_schedule.steps) {
      require(s.at.count() < duration_ms, "churn_schedule", "step after the end of the run");
    }
  }
}

std::string to_json(const ScenarioConfig& cfg) {
  json j;
  j["experiment"] = std::string(to_string(cfg.experiment));
  ScenarioConfig copy = cfg;
  visit_fields(copy, [&](const char* name, auto& field) { j[name] = field; });
  json steps = json::array();
  for (const auto& s : cfg.churn_schedule.steps) {
    steps.push_back({{"at_ms", s.at.count()},
                     {"action", std::string(to_string(s.action))},
                     {"count", s.count},
                     {"graceful", s.graceful}});
  }
  j["churn_schedule"] = steps;
  return j.dump(2);
}

ScenarioConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_invalid, std::string("not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config", "top level must be an object");

  ScenarioConfig cfg;
  std::set<std::string> known{"experiment", "churn_schedule"};
  visit_fields(cfg, [&](const char* name, auto&) { known.insert(name); });
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(Errc::config_invalid, "unknown field '" + key + "'");
  }

  if (j.contains("experiment")) {
    require(j["experiment"].is_string(), "experiment", "expected a string");
    cfg.experiment = parse_experiment(j["experiment"].get<std::string>());
  }
  visit_fields(cfg, [&](const char* name, auto& field) {
    if (!j.contains(name)) return;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::vector<int>>) {
      require(j[name].is_array(), name, "expected an array");
      field.clear();
      for (const auto& e : j[name]) {
        int v = 0;
        read_as(e, name, v);
        field.push_back(v);
      }
    } else {
      read_as(j[name], name, field);
    }
  });
  if (j.contains("churn_schedule")) {
    const json& arr = j["churn_schedule"];
    require(arr.is_array(), "churn_schedule", "expected an array");
    for (const auto& s : arr) {
      require(s.is_object(), "churn_schedule", "steps are objects");
      for (const auto& [key, value] : s.items()) {
        if (key != "at_ms" && key != "action" && key != "count" && key != "graceful") {
          throw Error(Errc::config_invalid, "churn_schedule: unknown field '" + key + "'");
        }
      }
      require(s.contains("at_ms") && s.contains("action") && s.contains("count"), "churn_schedule",
              "steps need at_ms, action and count");
      simnet::ChurnStep step;
      std::int64_t at = 0;
      read_as(s["at_ms"], "churn_schedule.at_ms", at);
      step.at = SimTime(at);
      std::string action;
      read_as(s["action"], "churn_schedule.action", action);
      if (action == "add_nodes") {
        step.action = simnet::ChurnStep::Action::add_nodes;
      } else if (action == "remove_nodes") {
        step.action = simnet::ChurnStep::Action::remove_nodes;
      } else {
        throw Error(Errc::config_invalid, "churn_schedule.action: '" + action + "'");
      }
      read_as(s["count"], "churn_schedule.count", step.count);
      if (s.contains("graceful")) read_as(s["graceful"], "churn_schedule.graceful", step.graceful);
      cfg.churn_schedule.steps.push_back(step);
    }
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace chordmob::harness
