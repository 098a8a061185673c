#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "restore/model.hpp"

namespace restore {

enum class EventKind {
  close_breaker,
  close_branch,
  gen_online,
  load_increment,
  shunt_close,
  vref_change,
  redispatch,
  load_shed,
  synchronize,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view text);

/// One switching, pickup or remedial action. Payloads are absolute so a plan
/// can be replayed without knowing the state it was produced from:
///   gen_online      mw = p_set, setpoint_pu = voltage setpoint
///   load_increment  mw/mvar = served totals after the increment
///   load_shed       mw/mvar = served totals after the shed
///   vref_change     setpoint_pu
///   redispatch      mw = new p_set
struct Event {
  double time_s = 0.0;
  EventKind kind = EventKind::close_breaker;
  std::string element;
  double mw = 0.0;
  double mvar = 0.0;
  double setpoint_pu = 0.0;
  std::string cause;  // "pickup", "path", "tie", or "remedy:<kind>"

  bool operator==(const Event&) const = default;
};

/// Applies an event to the network. Throws ModelError when the event names an
/// unknown or unavailable element or is inconsistent with the current state.
void apply_event(Network& network, const Event& event);

enum class ViolationKind { voltage, frequency, branch };
enum class Tier { instant, sustained };

std::string_view to_string(ViolationKind kind);
std::string_view to_string(Tier tier);

struct Violation {
  ViolationKind kind = ViolationKind::voltage;
  std::string element;  // node, island (lowest node id) or branch id
  double value = 0.0;
  Tier tier = Tier::instant;
  double first_seen_s = 0.0;
  double duration_s = 0.0;
  bool resolved = false;

  bool operator==(const Violation&) const = default;
};

/// Post-step electrical summary of one energized island.
struct IslandSummary {
  std::string island;  // lowest node id in the island
  std::string zones;   // member zone ids joined by '+'
  double gen_mw = 0.0;
  double gen_mvar = 0.0;
  double load_mw = 0.0;
  double load_mvar = 0.0;
  double v_min_pu = 0.0;
  double v_max_pu = 0.0;
  double frequency_hz = 0.0;
  double max_loading_pct = 0.0;

  bool operator==(const IslandSummary&) const = default;
};

struct Step {
  double time_s = 0.0;
  int stage = 1;
  std::string scope;   // zone id, or "system"
  std::string action;  // e.g. "gen_pickup G1"
  std::vector<Event> events;
  std::vector<IslandSummary> summary;

  bool operator==(const Step&) const = default;
};

enum class PlanStatus { complete, partial, infeasible };

std::string_view to_string(PlanStatus status);
std::optional<PlanStatus> plan_status_from_string(std::string_view text);

struct PlanStatistics {
  double total_load_mw = 0.0;
  double served_mw = 0.0;
  double restored_pct = 0.0;
  double duration_s = 0.0;
  int remediation_events = 0;

  bool operator==(const PlanStatistics&) const = default;
};

struct RestorationPlan {
  PlanStatus status = PlanStatus::partial;
  std::vector<Step> steps;
  PlanStatistics statistics;
  std::string diagnostic;
  std::vector<Violation> violation_log;
  std::vector<std::string> warnings;

  bool operator==(const RestorationPlan&) const = default;
};

}  // namespace restore
