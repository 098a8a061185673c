#include "restore/plan.hpp"

#include <array>
#include <cmath>
#include <utility>

#include <fmt/format.h>

namespace restore {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 9> kEventNames{{
    {EventKind::close_breaker, "close_breaker"},
    {EventKind::close_branch, "close_branch"},
    {EventKind::gen_online, "gen_online"},
    {EventKind::load_increment, "load_increment"},
    {EventKind::shunt_close, "shunt_close"},
    {EventKind::vref_change, "vref_change"},
    {EventKind::redispatch, "redispatch"},
    {EventKind::load_shed, "load_shed"},
    {EventKind::synchronize, "synchronize"},
}};

template <class T>
T& element(std::vector<T>& items, const Network& network, ElementKind kind,
           const Event& event) {
  Index i = network.find(kind, event.element);
  if (i == kNoIndex) {
    throw ModelError(fmt::format("{} event references unknown {} '{}'", to_string(event.kind),
                                 to_string(kind), event.element));
  }
  return items[i];
}

void require_available(bool available, const Event& event) {
  if (!available) {
    throw ModelError(fmt::format("{} event references unavailable element '{}'",
                                 to_string(event.kind), event.element));
  }
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<EventKind> event_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kEventNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::voltage: return "voltage";
    case ViolationKind::frequency: return "frequency";
    case ViolationKind::branch: return "branch";
  }
  return "?";
}

std::string_view to_string(Tier tier) { return tier == Tier::instant ? "instant" : "sustained"; }

std::string_view to_string(PlanStatus status) {
  switch (status) {
    case PlanStatus::complete: return "complete";
    case PlanStatus::partial: return "partial";
    case PlanStatus::infeasible: return "infeasible";
  }
  return "?";
}

std::optional<PlanStatus> plan_status_from_string(std::string_view text) {
  for (auto s : {PlanStatus::complete, PlanStatus::partial, PlanStatus::infeasible}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void apply_event(Network& network, const Event& event) {
  switch (event.kind) {
    case EventKind::close_breaker: {
      auto& b = element(network.breakers, network, ElementKind::breaker, event);
      require_available(b.available, event);
      b.closed = true;
      break;
    }
    case EventKind::close_branch: {
      auto& br = element(network.branches, network, ElementKind::branch, event);
      require_available(br.available, event);
      br.closed = true;
      break;
    }
    case EventKind::synchronize: {
      // Marker for the closure that paralleled two islands.
      element(network.branches, network, ElementKind::branch, event);
      break;
    }
    case EventKind::gen_online: {
      auto& g = element(network.generators, network, ElementKind::generator, event);
      require_available(g.available && !g.is_renewable, event);
      g.online = true;
      g.p_set_mw = event.mw;
      g.v_setpoint_pu = event.setpoint_pu;
      break;
    }
    case EventKind::vref_change: {
      auto& g = element(network.generators, network, ElementKind::generator, event);
      if (!g.online) throw ModelError(fmt::format("vref_change on offline unit '{}'", g.id));
      g.v_setpoint_pu = event.setpoint_pu;
      break;
    }
    case EventKind::redispatch: {
      auto& g = element(network.generators, network, ElementKind::generator, event);
      if (!g.online) throw ModelError(fmt::format("redispatch of offline unit '{}'", g.id));
      g.p_set_mw = event.mw;
      break;
    }
    case EventKind::load_increment:
    case EventKind::load_shed: {
      auto& l = element(network.loads, network, ElementKind::load, event);
      require_available(l.available, event);
      if (event.mw < -1e-9 || event.mw > l.p_mw + 1e-9) {
        throw ModelError(fmt::format("{} of '{}' to {} MW exceeds its demand", to_string(event.kind),
                                     l.id, event.mw));
      }
      l.serve(event.mw);
      break;
    }
    case EventKind::shunt_close: {
      auto& s = element(network.shunts, network, ElementKind::shunt, event);
      require_available(s.available, event);
      s.closed = true;
      break;
    }
  }
}

}  // namespace restore
