#include "restore/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "restore/pathfinder.hpp"

namespace restore {

bool LimitSet::valid() const {
  return v_instant_min <= v_sustained_min && v_sustained_min < v_sustained_max &&
         v_sustained_max <= v_instant_max && f_instant_min <= f_sustained_min &&
         f_sustained_min < f_sustained_max && f_sustained_max <= f_instant_max && v_duration_s >= 0.0 &&
         f_duration_s >= 0.0 && branch_max_pct > 0.0;
}

double SustainedTracker::observe(const std::string& key, double now_s, double hold_s) {
  auto [it, inserted] = first_seen_.emplace(key, now_s);
  return now_s - it->second + hold_s;
}

void SustainedTracker::retain_only(const std::set<std::string>& active) {
  std::erase_if(first_seen_, [&](const auto& kv) { return !active.contains(kv.first); });
}

void SustainedTracker::forget(const std::string& key) { first_seen_.erase(key); }

double SustainedTracker::first_seen(const std::string& key, double fallback) const {
  auto it = first_seen_.find(key);
  return it == first_seen_.end() ? fallback : it->second;
}

namespace {

std::string island_label(const Network& network, const Island& island) {
  const std::string* best = nullptr;
  for (Index n : island.nodes) {
    if (!best || network.nodes[n].id < *best) best = &network.nodes[n].id;
  }
  return best ? *best : std::string();
}

bool in_island(const Island& island, Index node) {
  return std::binary_search(island.nodes.begin(), island.nodes.end(), node);
}

Island refresh_island(const Network& network, Index seed_node) {
  for (auto& c : components(network)) {
    if (in_island(c, seed_node)) return c;
  }
  return {};
}

SolveOptions flat(const SolveOptions& base) {
  SolveOptions o = base;
  o.warm_start = nullptr;
  return o;
}

std::optional<SolutionState> try_solve(const Network& network, const Island& island, const SolveOptions& opt) {
  try {
    return solve_powerflow(network, island, opt);
  } catch (const SolverError&) {
    return std::nullopt;
  }
}

Event make_event(const RemedyContext& ctx, EventKind kind, std::string element, std::string_view cause) {
  Event e;
  e.time_s = ctx.clock.now_s;
  e.kind = kind;
  e.element = std::move(element);
  e.cause = std::string(cause);
  return e;
}

void commit(RemedyContext& ctx, RemedyResult& out, Event e) {
  apply_event(ctx.network, e);
  out.events.push_back(std::move(e));
}

/// Online units of the island ordered by electrical distance from `from`
/// over closed elements, ties by id.
std::vector<Index> units_by_proximity(const Network& network, const Island& island, Index from) {
  if (from == kNoIndex || !in_island(island, from)) from = island.nodes.front();
  GraphScope scope;
  scope.closed_only = true;
  const auto dist = distances_from(build_cranking_graph(network, scope), from);
  std::vector<Index> units;
  for (Index g : island.generators) {
    if (network.generators[g].online) units.push_back(g);
  }
  std::sort(units.begin(), units.end(), [&](Index a, Index b) {
    const double da = dist[network.generators[a].node], db = dist[network.generators[b].node];
    if (da != db) return da < db;
    return network.generators[a].id < network.generators[b].id;
  });
  return units;
}

std::string violation_key(const Violation& v) {
  return fmt::format("{}:{}:{}", to_string(v.kind), to_string(v.tier), v.element);
}

}  // namespace

std::vector<Violation> check(const Network& network, const Island& island, const SolutionState& solution,
                             const LimitSet& limits, const Clock& clock, SustainedTracker& tracker,
                             double nadir_factor) {
  std::vector<Violation> out;
  std::set<std::string> active;

  auto sustained = [&](ViolationKind kind, const std::string& key, const std::string& element, double value,
                       double duration) {
    active.insert(key);
    const double elapsed = tracker.observe(key, clock.now_s, clock.hold_s);
    if (elapsed >= duration) {
      out.push_back({kind, element, value, Tier::sustained, tracker.first_seen(key, clock.now_s), elapsed, false});
    }
  };

  // Voltage: worst low and worst high node per island.
  Index lo = kNoIndex, hi = kNoIndex;
  for (Index i = 0; i < solution.nodes.size(); ++i) {
    if (lo == kNoIndex || solution.v_pu[i] < solution.v_pu[lo]) lo = i;
    if (hi == kNoIndex || solution.v_pu[i] > solution.v_pu[hi]) hi = i;
  }
  const std::string label = island_label(network, island);
  if (lo != kNoIndex) {
    const double vlo = solution.v_pu[lo], vhi = solution.v_pu[hi];
    const auto& lo_id = network.nodes[solution.nodes[lo]].id;
    const auto& hi_id = network.nodes[solution.nodes[hi]].id;
    if (vlo <= limits.v_instant_min) {
      out.push_back({ViolationKind::voltage, lo_id, vlo, Tier::instant, clock.now_s, 0.0, false});
    } else if (vlo <= limits.v_sustained_min) {
      sustained(ViolationKind::voltage, "vlow:" + label, lo_id, vlo, limits.v_duration_s);
    }
    if (vhi >= limits.v_instant_max) {
      out.push_back({ViolationKind::voltage, hi_id, vhi, Tier::instant, clock.now_s, 0.0, false});
    } else if (vhi >= limits.v_sustained_max) {
      sustained(ViolationKind::voltage, "vhigh:" + label, hi_id, vhi, limits.v_duration_s);
    }
  }

  const double f = solution.frequency_hz;
  const double nadir = frequency_nadir(network.f0_hz, f, nadir_factor);
  if (nadir <= limits.f_instant_min || nadir >= limits.f_instant_max) {
    out.push_back({ViolationKind::frequency, label, f, Tier::instant, clock.now_s, 0.0, false});
  } else if (f <= limits.f_sustained_min || f >= limits.f_sustained_max) {
    sustained(ViolationKind::frequency, "freq:" + label, label, f, limits.f_duration_s);
  }

  for (const auto& br : solution.branches) {
    if (br.loading_pct >= limits.branch_max_pct) {
      out.push_back({ViolationKind::branch, network.branches[br.branch].id, br.loading_pct, Tier::instant,
                     clock.now_s, 0.0, false});
    }
  }
  for (const char* prefix : {"vlow:", "vhigh:", "freq:"}) {
    const std::string key = prefix + label;
    if (!active.contains(key)) tracker.forget(key);
  }
  return out;
}

IslandSummary summarize(const Network& network, const Island& island, const SolutionState& solution) {
  IslandSummary s;
  s.island = island_label(network, island);
  std::set<std::string> zones;
  for (Index n : island.nodes) {
    Index z = network.zone_of_node(n);
    if (z != kNoIndex) zones.insert(network.zones[z].id);
  }
  for (const auto& z : zones) {
    if (!s.zones.empty()) s.zones += '+';
    s.zones += z;
  }
  for (const auto& g : solution.generators) {
    s.gen_mw += g.p_mw;
    s.gen_mvar += g.q_mvar;
  }
  for (Index l : island.loads) {
    s.load_mw += network.loads[l].served_mw;
    s.load_mvar += network.loads[l].served_mvar;
  }
  if (!solution.v_pu.empty()) {
    auto [mn, mx] = std::minmax_element(solution.v_pu.begin(), solution.v_pu.end());
    s.v_min_pu = *mn;
    s.v_max_pu = *mx;
  }
  s.frequency_hz = solution.frequency_hz;
  for (const auto& br : solution.branches) s.max_loading_pct = std::max(s.max_loading_pct, br.loading_pct);
  return s;
}

// ---------------------------------------------------------------------------

RemedyResult shed_newest(RemedyContext& ctx, const Island& island, const std::string& cause) {
  RemedyResult out;
  auto& net = ctx.network;
  auto pick = [&](bool critical) -> std::ptrdiff_t {
    for (auto i = static_cast<std::ptrdiff_t>(ctx.served.size()) - 1; i >= 0; --i) {
      const auto& inc = ctx.served[static_cast<std::size_t>(i)];
      const auto& load = net.loads[inc.load];
      if (load.is_critical == critical && load.served_mw > 1e-9 && in_island(island, load.node)) return i;
    }
    return -1;
  };
  auto slot = pick(false);
  if (slot < 0) slot = pick(true);
  if (slot < 0) {
    out.exhausted = true;
    return out;
  }
  const auto inc = ctx.served[static_cast<std::size_t>(slot)];
  auto& load = net.loads[inc.load];
  const double remaining = std::max(0.0, load.served_mw - std::min(inc.mw, load.served_mw));
  Event e = make_event(ctx, EventKind::load_shed, load.id, cause);
  e.mw = remaining;
  e.mvar = load.p_mw > 0.0 ? remaining * load.q_mvar / load.p_mw : 0.0;
  commit(ctx, out, std::move(e));
  ctx.capped_loads.insert(inc.load);
  ctx.served.erase(ctx.served.begin() + slot);
  if (ctx.pending && ctx.pending->load == inc.load) ctx.pending.reset();
  return out;
}

RemedyResult remediate_frequency(RemedyContext& ctx, const Island& island, const SolutionState* solution,
                                 const Violation& violation) {
  RemedyResult out;
  auto& net = ctx.network;
  const bool under = !solution || violation.value < net.f0_hz;

  if (solution) {
    double imbalance = 0.0;  // output above setpoints
    for (const auto& r : solution->generators) imbalance += r.p_mw - net.generators[r.generator].p_set_mw;
    for (Index g : units_by_proximity(net, island, ctx.focus_node)) {
      if (ctx.ineffective_units.contains(g)) continue;
      const auto& gen = net.generators[g];
      double next = gen.p_set_mw;
      if (under && imbalance > 1e-6) {
        next = gen.p_set_mw + std::min(gen.p_max_mw - gen.p_set_mw, imbalance);
      } else if (!under && imbalance < -1e-6) {
        next = gen.p_set_mw - std::min(gen.p_set_mw - gen.p_min_mw, -imbalance);
      }
      if (std::abs(next - gen.p_set_mw) <= 1e-6) continue;
      Event e = make_event(ctx, EventKind::redispatch, gen.id, "remedy:frequency");
      e.mw = next;
      commit(ctx, out, std::move(e));
      return out;
    }
  }
  if (under) return shed_newest(ctx, island, "remedy:frequency");
  out.exhausted = true;
  return out;
}

RemedyResult remediate_voltage(RemedyContext& ctx, const Island& island, const SolutionState& solution,
                               const Violation& violation) {
  RemedyResult out;
  auto& net = ctx.network;
  const auto& lim = ctx.limits;
  const Index node = net.node_index(violation.element);
  const bool under = violation.value < 1.0;
  const double v_now = solution.voltage(node);

  SolveOptions warm = ctx.options.solve;
  warm.warm_start = &solution;

  for (Index g : units_by_proximity(net, island, node)) {
    if (ctx.ineffective_units.contains(g)) continue;
    const auto& gen = net.generators[g];
    const double next = gen.v_setpoint_pu + (under ? ctx.options.vref_step_pu : -ctx.options.vref_step_pu);
    if (next > ctx.options.vref_max_pu + 1e-12 || next < ctx.options.vref_min_pu - 1e-12) {
      ctx.ineffective_units.insert(g);
      continue;
    }
    Network trial = net;
    trial.generators[g].v_setpoint_pu = next;
    auto sol = try_solve(trial, island, warm);
    bool accept = false;
    if (sol) {
      const double v = sol->voltage(node);
      const auto [mn, mx] = std::minmax_element(sol->v_pu.begin(), sol->v_pu.end());
      accept = under ? (v > v_now + 1e-6 && *mx < lim.v_sustained_max)
                     : (v < v_now - 1e-6 && *mn > lim.v_sustained_min);
    }
    if (!accept) {
      ctx.ineffective_units.insert(g);
      continue;
    }
    Event e = make_event(ctx, EventKind::vref_change, gen.id, "remedy:voltage");
    e.setpoint_pu = next;
    commit(ctx, out, std::move(e));
    return out;
  }

  if (under) {
    std::vector<bool> live(net.nodes.size(), false);
    for (Index n : island.nodes) live[n] = true;
    for (Index si = 0; si < net.shunts.size(); ++si) {
      const auto& sh = net.shunts[si];
      if (!sh.available || sh.closed || sh.mvar_nominal <= 0.0 || ctx.tried_shunts.contains(si)) continue;
      GraphScope scope;
      scope.substation = net.nodes[sh.node].substation_id;
      scope.switches_only = true;
      auto path = cranking_path(build_cranking_graph(net, scope), sh.node, live);
      if (!path) continue;
      ctx.tried_shunts.insert(si);

      auto events = expand_to_breakers(net, *path);
      events.push_back({0.0, EventKind::shunt_close, sh.id, 0, 0, 0, ""});
      Network trial = net;
      for (const auto& e : events) apply_event(trial, e);
      auto sol = try_solve(trial, refresh_island(trial, island.nodes.front()), warm);
      if (!sol) continue;
      const auto [mn, mx] = std::minmax_element(sol->v_pu.begin(), sol->v_pu.end());
      if (*mn <= lim.v_sustained_min || *mx >= lim.v_sustained_max) continue;  // may overshoot
      for (auto e : events) {
        e.time_s = ctx.clock.now_s;
        e.cause = "remedy:voltage";
        commit(ctx, out, std::move(e));
      }
      return out;
    }

    if (ctx.pending && in_island(island, net.loads[ctx.pending->load].node)) {
      const auto inc = *ctx.pending;
      const bool ncl_served = std::any_of(island.loads.begin(), island.loads.end(), [&](Index l) {
        return !net.loads[l].is_critical && net.loads[l].served_mw > 1e-9;
      });
      if (net.loads[inc.load].is_critical && ncl_served) return shed_newest(ctx, island, "remedy:voltage");
      auto& load = net.loads[inc.load];
      const double remaining = std::max(0.0, load.served_mw - inc.mw);
      Event e = make_event(ctx, EventKind::load_shed, load.id, "remedy:voltage");
      e.mw = remaining;
      e.mvar = load.p_mw > 0.0 ? remaining * load.q_mvar / load.p_mw : 0.0;
      commit(ctx, out, std::move(e));
      ctx.capped_loads.insert(inc.load);
      for (auto it = ctx.served.rbegin(); it != ctx.served.rend(); ++it) {
        if (it->load == inc.load) {
          ctx.served.erase(std::next(it).base());
          break;
        }
      }
      ctx.pending.reset();
      return out;
    }
  }
  out.exhausted = true;
  return out;
}

std::vector<ClosureCandidate> rank_closure_candidates(const Network& network, const Island& island,
                                                      const SolutionState& solution, Index monitored) {
  DcModel model(network, island);
  const auto inj = node_injections_mw(network, island, &solution);
  std::vector<bool> live(network.nodes.size(), false);
  for (Index n : island.nodes) live[n] = true;

  std::vector<ClosureCandidate> out;
  for (Index c = 0; c < network.branches.size(); ++c) {
    const auto& br = network.branches[c];
    if (!br.available || br.closed || br.internal || br.zero_impedance || br.x_pu == 0.0) continue;

    ClosureCandidate cand;
    cand.branch = c;
    Index bus[2] = {kNoIndex, kNoIndex};
    const Index ends[2] = {br.from_node, br.to_node};
    bool reachable = true;
    for (int k = 0; k < 2 && reachable; ++k) {
      GraphScope scope;
      scope.substation = network.nodes[ends[k]].substation_id;
      scope.switches_only = true;
      auto path = cranking_path(build_cranking_graph(network, scope), ends[k], live);
      if (!path) {
        reachable = false;
        break;
      }
      bus[k] = model.buses().bus_of(path->nodes.back());
      for (auto& e : expand_to_breakers(network, *path)) cand.events.push_back(std::move(e));
    }
    if (!reachable) continue;
    cand.events.push_back({0.0, EventKind::close_branch, br.id, 0, 0, 0, ""});
    cand.factor = lcdf(model, inj, monitored, bus[0], bus[1], br.x_pu);
    out.push_back(std::move(cand));
  }
  std::sort(out.begin(), out.end(), [&](const ClosureCandidate& a, const ClosureCandidate& b) {
    if (a.factor.relief_mw != b.factor.relief_mw) return a.factor.relief_mw < b.factor.relief_mw;
    return network.branches[a.branch].id < network.branches[b.branch].id;
  });
  return out;
}

RemedyResult remediate_branch(RemedyContext& ctx, const Island& island, const SolutionState& solution,
                              const Violation& violation) {
  auto& net = ctx.network;
  const Index monitored = net.find(ElementKind::branch, violation.element);

  if (ctx.branch_rounds < ctx.options.lcdf_max_rounds && monitored != kNoIndex) {
    SustainedTracker scratch = ctx.tracker;
    std::set<std::string> before;
    for (const auto& v : check(net, island, solution, ctx.limits, ctx.clock, scratch, ctx.options.nadir_factor)) {
      before.insert(violation_key(v));
    }
    double loading_now = 0.0;
    for (const auto& r : solution.branches) {
      if (r.branch == monitored) loading_now = r.loading_pct;
    }

    SolveOptions warm = ctx.options.solve;
    warm.warm_start = &solution;
    std::vector<ClosureCandidate> ranked;
    try {
      ranked = rank_closure_candidates(net, island, solution, monitored);
    } catch (const SolverError&) {
      ranked.clear();
    }
    for (auto& cand : ranked) {
      if (cand.factor.relief_mw >= -1e-9 || ctx.tried_branches.contains(cand.branch)) continue;
      ctx.tried_branches.insert(cand.branch);

      Network trial = net;
      for (const auto& e : cand.events) apply_event(trial, e);
      Island merged = refresh_island(trial, island.nodes.front());
      auto sol = try_solve(trial, merged, warm);
      if (!sol) continue;
      double loading_after = 0.0;
      for (const auto& r : sol->branches) {
        if (r.branch == monitored) loading_after = r.loading_pct;
      }
      if (loading_after >= loading_now) continue;
      SustainedTracker scratch2 = ctx.tracker;
      bool fresh_violation = false;
      for (const auto& v : check(trial, merged, *sol, ctx.limits, ctx.clock, scratch2, ctx.options.nadir_factor)) {
        if (!before.contains(violation_key(v))) fresh_violation = true;
      }
      if (fresh_violation) continue;

      RemedyResult out;
      for (auto e : cand.events) {
        e.time_s = ctx.clock.now_s;
        e.cause = "remedy:branch";
        commit(ctx, out, std::move(e));
      }
      ++ctx.branch_rounds;
      return out;
    }
    ctx.branch_rounds = ctx.options.lcdf_max_rounds;
  }
  return shed_newest(ctx, island, "remedy:branch");
}

// ---------------------------------------------------------------------------

std::vector<Island> islands_in_scope(const Network& network, Index zone) {
  auto all = energized_islands(network);
  if (zone == kNoIndex) return all;
  std::erase_if(all, [&](const Island& island) {
    return std::none_of(island.nodes.begin(), island.nodes.end(),
                        [&](Index n) { return network.zone_of_node(n) == zone; });
  });
  return all;
}

StabilizeResult stabilize(RemedyContext& ctx) {
  StabilizeResult result;
  const SolveOptions opt = flat(ctx.options.solve);
  std::map<std::string, std::size_t> seen;  // violation key -> index in result.violations

  for (int round = 0;; ++round) {
    auto islands = islands_in_scope(ctx.network, ctx.zone);
    std::vector<IslandOutcome> outcomes;
    std::vector<std::pair<std::size_t, Violation>> active;  // island slot, violation
    std::set<std::string> active_keys;

    for (auto& island : islands) {
      IslandOutcome o;
      o.island = island;
      try {
        o.solution = solve_powerflow(ctx.network, island, opt);
      } catch (const SolverError& e) {
        Violation v{ViolationKind::frequency, island_label(ctx.network, island), 0.0, Tier::instant,
                    ctx.clock.now_s, 0.0, false};
        active.emplace_back(outcomes.size(), v);
        if (result.diagnostic.empty()) result.diagnostic = e.what();
      }
      if (o.solution) {
        for (auto& v : check(ctx.network, island, *o.solution, ctx.limits, ctx.clock, ctx.tracker,
                             ctx.options.nadir_factor)) {
          active.emplace_back(outcomes.size(), std::move(v));
        }
        o.summary = summarize(ctx.network, island, *o.solution);
      }
      outcomes.push_back(std::move(o));
    }
    for (const auto& [slot, v] : active) {
      const auto key = violation_key(v);
      active_keys.insert(key);
      if (!seen.contains(key)) {
        seen[key] = result.violations.size();
        result.violations.push_back(v);
      }
    }

    if (active.empty()) {
      for (auto& v : result.violations) v.resolved = true;
      result.ok = true;
      result.diagnostic.clear();
      result.islands = std::move(outcomes);
      return result;
    }

    auto finish_unresolved = [&](std::string why) {
      for (auto& v : result.violations) v.resolved = !active_keys.contains(violation_key(v));
      result.ok = false;
      result.diagnostic = std::move(why);
      result.islands = std::move(outcomes);
      return result;
    };
    if (round >= ctx.options.max_remedies) {
      return finish_unresolved(fmt::format("remedy budget of {} actions exhausted", ctx.options.max_remedies));
    }

    // Frequency first, then voltage, then branch loading.
    const std::pair<std::size_t, Violation>* pick = nullptr;
    for (auto kind : {ViolationKind::frequency, ViolationKind::voltage, ViolationKind::branch}) {
      for (const auto& a : active) {
        if (a.second.kind == kind) {
          pick = &a;
          break;
        }
      }
      if (pick) break;
    }
    const auto& [slot, v] = *pick;
    const auto& outcome = outcomes[slot];
    RemedyResult r;
    switch (v.kind) {
      case ViolationKind::frequency:
        r = remediate_frequency(ctx, outcome.island, outcome.solution ? &*outcome.solution : nullptr, v);
        break;
      case ViolationKind::voltage:
        r = remediate_voltage(ctx, outcome.island, *outcome.solution, v);
        break;
      case ViolationKind::branch:
        r = remediate_branch(ctx, outcome.island, *outcome.solution, v);
        break;
    }
    if (r.exhausted || r.events.empty()) {
      std::string why = fmt::format("unresolved {} {} violation at '{}' (value {:.4f})", to_string(v.tier),
                                    to_string(v.kind), v.element, v.value);
      if (!outcome.solution && !result.diagnostic.empty()) why += ": " + result.diagnostic;
      return finish_unresolved(std::move(why));
    }
    for (auto& e : r.events) result.events.push_back(std::move(e));
  }
}

}  // namespace restore
