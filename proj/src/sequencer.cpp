#include "restore/sequencer.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <utility>

#include <fmt/format.h>

#include "restore/pathfinder.hpp"

namespace restore {

namespace {

constexpr std::array<std::pair<GenKey, std::string_view>, 5> kGenKeys{{
    {GenKey::max_mw, "max_mw"},
    {GenKey::min_mw, "min_mw"},
    {GenKey::startup_time, "startup_time"},
    {GenKey::distance, "distance"},
    {GenKey::crew_time, "crew_time"},
}};
constexpr std::array<std::pair<LoadKey, std::string_view>, 3> kLoadKeys{{
    {LoadKey::max_mw, "max_mw"},
    {LoadKey::min_mw, "min_mw"},
    {LoadKey::crew_time, "crew_time"},
}};

constexpr double kReserveFraction = 0.05;
constexpr double kEps = 1e-9;
constexpr int kMaxSteps = 100000;

}  // namespace

std::string_view to_string(GenKey key) {
  for (const auto& [k, s] : kGenKeys) {
    if (k == key) return s;
  }
  return "?";
}

std::string_view to_string(LoadKey key) {
  for (const auto& [k, s] : kLoadKeys) {
    if (k == key) return s;
  }
  return "?";
}

std::optional<GenKey> gen_key_from_string(std::string_view text) {
  for (const auto& [k, s] : kGenKeys) {
    if (s == text) return k;
  }
  return std::nullopt;
}

std::optional<LoadKey> load_key_from_string(std::string_view text) {
  for (const auto& [k, s] : kLoadKeys) {
    if (s == text) return k;
  }
  return std::nullopt;
}

void Config::validate() const {
  auto fail = [](std::string_view field, std::string_view rule) {
    throw std::invalid_argument(fmt::format("config field '{}' must be {}", field, rule));
  };
  if (!(criterion1_alpha >= 0.0 && criterion1_alpha <= 1.0)) fail("criterion1_alpha", "in [0, 1]");
  if (!(criterion4_beta > 0.0 && criterion4_beta <= 1.0)) fail("criterion4_beta", "in (0, 1]");
  if (!(load_inc_mw > 0.0)) fail("load_inc_mw", "positive");
  if (!(gen_vref_pu > 0.0)) fail("gen_vref_pu", "positive");
  if (!(t_load_s >= 0.0)) fail("t_load_s", "non-negative");
  if (!(t_event_s >= 0.0)) fail("t_event_s", "non-negative");
  if (!limits.valid()) fail("limits", "nested instant/sustained bands");
  if (!(monitor.nadir_factor >= 1.0)) fail("nadir_factor", "at least 1");
  if (monitor.max_remedies < 0) fail("max_remedies", "non-negative");
  if (monitor.lcdf_max_rounds < 0) fail("lcdf_max_rounds", "non-negative");
  if (!(monitor.solve.tolerance_pu > 0.0)) fail("pf_tolerance", "positive");
  if (monitor.solve.max_iterations < 1) fail("pf_max_iter", "at least 1");
  if (jobs < 1) fail("jobs", "at least 1");
}

Choice choose_next(double headroom_mw, double next_increment_mw, bool have_generators, bool have_loads,
                   double alpha) {
  if (!have_generators && !have_loads) return Choice::done;
  if (!have_loads) return Choice::generator;
  if (!have_generators) return Choice::load;
  return alpha * headroom_mw < next_increment_mw ? Choice::generator : Choice::load;
}

Index select_generator(const Network& network, std::span<const Index> candidates, GenKey key,
                       const std::vector<double>* distance) {
  auto score = [&](Index g) {
    const auto& gen = network.generators[g];
    switch (key) {
      case GenKey::max_mw: return -gen.p_max_mw;
      case GenKey::min_mw: return gen.p_max_mw;
      case GenKey::startup_time: return gen.startup_time_s;
      case GenKey::distance: return distance ? (*distance)[gen.node] : 0.0;
      case GenKey::crew_time: return gen.crew_time_s;
    }
    return 0.0;
  };
  Index best = kNoIndex;
  for (Index g : candidates) {
    if (best == kNoIndex) {
      best = g;
      continue;
    }
    const double a = score(g), b = score(best);
    if (a < b || (a == b && network.generators[g].id < network.generators[best].id)) best = g;
  }
  return best;
}

Index select_load(const Network& network, std::span<const Index> candidates, LoadKey key) {
  auto score = [&](Index l) {
    const auto& load = network.loads[l];
    switch (key) {
      case LoadKey::max_mw: return -load.p_mw;
      case LoadKey::min_mw: return load.p_mw;
      case LoadKey::crew_time: return load.crew_time_s;
    }
    return 0.0;
  };
  Index best = kNoIndex;
  for (Index l : candidates) {
    if (best == kNoIndex) {
      best = l;
      continue;
    }
    const double a = score(l), b = score(best);
    if (a < b || (a == b && network.loads[l].id < network.loads[best].id)) best = l;
  }
  return best;
}

double next_increment_mw(const Load& load, double load_inc_mw) {
  return std::max(0.0, std::min(load_inc_mw, load.p_mw - load.served_mw));
}

double total_demand_mw(const Network& network, Index zone) {
  double sum = 0.0;
  for (const auto& l : network.loads) {
    if (zone == kNoIndex || network.zone_of_node(l.node) == zone) sum += l.p_mw;
  }
  return sum;
}

double served_mw(const Network& network, Index zone) {
  double sum = 0.0;
  for (const auto& l : network.loads) {
    if (zone == kNoIndex || network.zone_of_node(l.node) == zone) sum += l.served_mw;
  }
  return sum;
}

bool stopping_met(const Network& network, double beta) {
  return served_mw(network) >= beta * total_demand_mw(network);
}

namespace {

struct Area {
  Network net;
  Index zone = kNoIndex;  // kNoIndex: the whole system
  std::string scope;
  bool strict_share = false;  // never exceed share_mw with an increment
  double share_mw = 0.0;
  double clock = 0.0;
  std::vector<ServedIncrement> served;
  std::set<Index> capped;
  std::set<Index> skipped_gens;
  std::set<Index> skipped_loads;
  std::map<Index, double> output;  // unit outputs from the last committed step
  SustainedTracker tracker;
  std::vector<Step> steps;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;
  bool infeasible = false;
  std::string diagnostic;
};

bool in_area(const Area& a, Index node) { return a.zone == kNoIndex || a.net.zone_of_node(node) == a.zone; }

std::vector<bool> live_nodes(const Network& net) {
  std::vector<bool> live(net.nodes.size(), false);
  for (const auto& island : energized_islands(net)) {
    for (Index n : island.nodes) live[n] = true;
  }
  return live;
}

/// Path from `node` to the energized area, an empty path when already live.
std::optional<CrankingPath> reach(const Area& a, Index node, const std::vector<bool>& live) {
  if (live[node]) return CrankingPath{{node}, {}, 0.0};
  GraphScope scope;
  scope.zone = a.zone;
  return cranking_path(build_cranking_graph(a.net, scope), node, live);
}

double unit_output(const Area& a, Index g) {
  auto it = a.output.find(g);
  return it == a.output.end() ? a.net.generators[g].p_set_mw : it->second;
}

double area_headroom(const Area& a) {
  double h = 0.0;
  for (Index g = 0; g < a.net.generators.size(); ++g) {
    const auto& gen = a.net.generators[g];
    if (gen.online && in_area(a, gen.node)) h += gen.p_max_mw - unit_output(a, g);
  }
  return std::max(0.0, h);
}

/// The load's island must carry the increment plus a spinning reserve.
bool capacity_ok(const Area& a, const CrankingPath& path, double inc) {
  const Index anchor = path.nodes.back();
  for (const auto& island : energized_islands(a.net)) {
    if (!std::binary_search(island.nodes.begin(), island.nodes.end(), anchor)) continue;
    double headroom = 0.0, served = 0.0;
    for (Index g : island.generators) {
      const auto& gen = a.net.generators[g];
      if (gen.online) headroom += gen.p_max_mw - unit_output(a, g);
    }
    for (Index l : island.loads) served += a.net.loads[l].served_mw;
    return headroom >= inc + kReserveFraction * (served + inc) - kEps;
  }
  return false;
}

/// Committed units must not produce more than the area consumes at minimum.
bool min_generation_ok(const Area& a, Index g) {
  const auto& gen = a.net.generators[g];
  if (gen.is_blackstart) return true;
  double floor = gen.p_min_mw;
  for (const auto& other : a.net.generators) {
    if (other.online && in_area(a, other.node)) floor += other.p_min_mw;
  }
  double served = 0.0;
  for (const auto& l : a.net.loads) {
    if (in_area(a, l.node)) served += l.served_mw;
  }
  return floor <= served + kEps;
}

bool gen_pending(const Area& a, Index g) {
  const auto& gen = a.net.generators[g];
  return gen.available && !gen.is_renewable && !gen.online && !a.skipped_gens.contains(g) && in_area(a, gen.node);
}

bool load_pending(const Area& a, Index l) {
  const auto& load = a.net.loads[l];
  return load.available && !a.capped.contains(l) && !a.skipped_loads.contains(l) &&
         load.p_mw - load.served_mw > kEps && in_area(a, load.node);
}

struct Rules {
  int stage = 1;
  std::function<bool(const Area&, Index)> load_allowed;
  std::function<bool(const Area&, Index)> gen_allowed;
  std::function<bool(const Area&)> stop;
};

/// Applies one step on a trial copy, stabilizes and commits on success.
bool execute(Area& a, const Config& cfg, int stage, std::string action, std::vector<Event> events, double hold,
             Index focus, std::optional<ServedIncrement> pending, bool fatal) {
  Network trial = a.net;
  auto served = a.served;
  auto capped = a.capped;
  for (auto& e : events) {
    e.time_s = a.clock;
    apply_event(trial, e);
  }
  if (pending) served.push_back(*pending);
  RemedyContext ctx{trial, cfg.limits, cfg.monitor, Clock{a.clock, hold}, a.zone, focus, served, capped, pending,
                    a.tracker, {}, {}, {}, 0};
  auto result = stabilize(ctx);
  if (!result.ok) {
    const std::string why = fmt::format("{} at t={:.3f} s: {}", action, a.clock, result.diagnostic);
    if (fatal) {
      a.infeasible = true;
      a.diagnostic = why;
      for (auto& v : result.violations) a.violations.push_back(v);
    } else {
      a.warnings.push_back(why);
    }
    return false;
  }
  for (auto& e : result.events) events.push_back(std::move(e));
  for (auto& v : result.violations) a.violations.push_back(std::move(v));

  Step step;
  step.time_s = a.clock;
  step.stage = stage;
  step.scope = a.scope;
  step.action = std::move(action);
  step.events = std::move(events);
  for (const auto& o : result.islands) {
    step.summary.push_back(o.summary);
    for (const auto& g : o.solution->generators) a.output[g.generator] = g.p_mw;
  }
  a.steps.push_back(std::move(step));

  a.net = std::move(trial);
  a.served = std::move(served);
  a.capped = std::move(capped);
  a.tracker = ctx.tracker;
  a.clock += hold;
  return true;
}

void pickup_generator(Area& a, const Config& cfg, int stage, Index g) {
  const auto gen = a.net.generators[g];
  const auto live = live_nodes(a.net);
  std::vector<Event> events;
  if (auto path = reach(a, gen.node, live)) {
    events = expand_to_breakers(a.net, *path);
  } else if (!gen.is_blackstart) {
    a.warnings.push_back(fmt::format("generator '{}' unreachable from an energized area in {}; skipped", gen.id,
                                     a.scope));
    a.skipped_gens.insert(g);
    return;
  }
  Event on;
  on.kind = EventKind::gen_online;
  on.element = gen.id;
  on.mw = gen.p_min_mw;
  on.setpoint_pu = cfg.gen_vref_pu;
  on.cause = "pickup";
  events.push_back(on);
  double hold = cfg.t_event_s;
  if (cfg.device_times_advance_clock) hold += gen.startup_time_s + gen.crew_time_s;
  execute(a, cfg, stage, "gen_pickup " + gen.id, std::move(events), hold, gen.node, std::nullopt, true);
}

void pickup_increment(Area& a, const Config& cfg, int stage, Index l, double inc, const CrankingPath& path) {
  const auto& load = a.net.loads[l];
  auto events = expand_to_breakers(a.net, path);
  Event ev;
  ev.kind = EventKind::load_increment;
  ev.element = load.id;
  ev.mw = std::min(load.p_mw, load.served_mw + inc);
  ev.mvar = load.p_mw > 0.0 ? ev.mw * load.q_mvar / load.p_mw : 0.0;
  ev.cause = "pickup";
  events.push_back(ev);
  double hold = cfg.t_load_s;
  if (cfg.device_times_advance_clock && load.served_mw <= 0.0) hold += load.crew_time_s;
  execute(a, cfg, stage, "load_pickup " + load.id, std::move(events), hold, load.node, ServedIncrement{l, inc},
          true);
}

void pickup_loop(Area& a, const Config& cfg, const Rules& rules) {
  for (int guard = 0; guard < kMaxSteps && !a.infeasible; ++guard) {
    if (rules.stop && rules.stop(a)) return;

    std::vector<Index> loads, gens;
    for (Index l = 0; l < a.net.loads.size(); ++l) {
      if (load_pending(a, l) && rules.load_allowed(a, l)) loads.push_back(l);
    }
    if (a.strict_share) {
      const double now = served_mw(a.net, a.zone);
      std::erase_if(loads, [&](Index l) {
        return now + next_increment_mw(a.net.loads[l], cfg.load_inc_mw) > a.share_mw + kEps;
      });
    }
    if (loads.empty()) return;
    for (Index g = 0; g < a.net.generators.size(); ++g) {
      if (gen_pending(a, g) && rules.gen_allowed(a, g) && min_generation_ok(a, g)) gens.push_back(g);
    }

    const auto live = live_nodes(a.net);
    std::optional<Index> load;
    std::optional<CrankingPath> path;
    double inc = 0.0;
    while (!loads.empty()) {
      const Index l = select_load(a.net, loads, cfg.criterion3_key);
      path = reach(a, a.net.loads[l].node, live);
      if (!path) {
        if (std::any_of(live.begin(), live.end(), [](bool b) { return b; })) {
          a.warnings.push_back(fmt::format("load '{}' unreachable from an energized area in {}; skipped",
                                           a.net.loads[l].id, a.scope));
        }
        a.skipped_loads.insert(l);
        std::erase(loads, l);
        continue;
      }
      inc = next_increment_mw(a.net.loads[l], cfg.load_inc_mw);
      if (capacity_ok(a, *path, inc)) load = l;
      break;
    }

    const auto choice = choose_next(area_headroom(a), inc, !gens.empty(), load.has_value(), cfg.criterion1_alpha);
    if (choice == Choice::done) return;
    if (choice == Choice::generator) {
      std::vector<double> dist;
      if (cfg.criterion2_key == GenKey::distance) {
        GraphScope scope;
        scope.zone = a.zone;
        const auto graph = build_cranking_graph(a.net, scope);
        dist.assign(a.net.nodes.size(), kUnreachable);
        for (Index g : gens) {
          const Index node = a.net.generators[g].node;
          dist[node] = live[node] ? 0.0 : electrical_distance(graph, node, live);
        }
      }
      pickup_generator(a, cfg, rules.stage, select_generator(a.net, gens, cfg.criterion2_key, &dist));
    } else {
      pickup_increment(a, cfg, rules.stage, *load, inc, *path);
    }
  }
}

double zone_cl_mw(const Area& a) {
  double sum = 0.0;
  for (const auto& l : a.net.loads) {
    if (l.is_critical && l.available && in_area(a, l.node)) sum += l.p_mw;
  }
  return sum;
}

bool cl_pending_in_zone(const Area& a, Index zone) {
  for (Index l = 0; l < a.net.loads.size(); ++l) {
    const auto& load = a.net.loads[l];
    if (load.is_critical && load_pending(a, l) && a.net.zone_of_node(load.node) == zone) return true;
  }
  return false;
}

void stage1(Area& a, const Config& cfg) {
  // Every available blackstart unit first.
  for (int guard = 0; guard < kMaxSteps && !a.infeasible; ++guard) {
    std::vector<Index> bsus;
    for (Index g = 0; g < a.net.generators.size(); ++g) {
      if (gen_pending(a, g) && a.net.generators[g].is_blackstart) bsus.push_back(g);
    }
    if (bsus.empty()) break;
    std::vector<double> dist;
    if (cfg.criterion2_key == GenKey::distance) {
      const auto live = live_nodes(a.net);
      GraphScope scope;
      scope.zone = a.zone;
      const auto graph = build_cranking_graph(a.net, scope);
      dist.assign(a.net.nodes.size(), kUnreachable);
      for (Index g : bsus) {
        const Index node = a.net.generators[g].node;
        dist[node] = live[node] ? 0.0 : electrical_distance(graph, node, live);
      }
    }
    pickup_generator(a, cfg, 1, select_generator(a.net, bsus, cfg.criterion2_key, &dist));
  }
  if (a.infeasible || energized_islands(a.net).empty()) return;

  double bsu_mw = 0.0;
  for (const auto& g : a.net.generators) {
    if (g.is_blackstart && g.available && in_area(a, g.node)) bsu_mw += g.p_max_mw;
  }
  const bool nbsu_ok = bsu_mw < zone_cl_mw(a);
  Rules rules;
  rules.stage = 1;
  rules.load_allowed = [](const Area& ar, Index l) { return ar.net.loads[l].is_critical; };
  rules.gen_allowed = [nbsu_ok](const Area& ar, Index g) { return nbsu_ok || ar.net.generators[g].is_blackstart; };
  const bool strict = a.strict_share;
  a.strict_share = false;
  pickup_loop(a, cfg, rules);
  a.strict_share = strict;
}

void stage2(Area& a, const Config& cfg) {
  if (a.infeasible || energized_islands(a.net).empty()) return;
  Rules rules;
  rules.stage = 2;
  rules.load_allowed = [](const Area& ar, Index l) {
    const auto& load = ar.net.loads[l];
    return load.is_critical || !cl_pending_in_zone(ar, ar.net.zone_of_node(load.node));
  };
  rules.gen_allowed = [](const Area&, Index) { return true; };
  rules.stop = [](const Area& ar) { return served_mw(ar.net, ar.zone) >= ar.share_mw; };
  pickup_loop(a, cfg, rules);
}

std::vector<Event> dedupe(std::vector<Event> events) {
  std::vector<Event> out;
  std::set<std::pair<EventKind, std::string>> seen;
  for (auto& e : events) {
    if (seen.emplace(e.kind, e.element).second) out.push_back(std::move(e));
  }
  return out;
}

enum class TieOutcome { closed, failed, unreachable, skipped };

TieOutcome close_tie(Area& a, const Config& cfg, Index t, bool zone_paths) {
  const auto br = a.net.branches[t];
  if (!br.available || br.closed) return TieOutcome::skipped;
  const auto live = live_nodes(a.net);
  std::optional<CrankingPath> side[2];
  const Index ends[2] = {br.from_node, br.to_node};
  for (int k = 0; k < 2; ++k) {
    GraphScope scope;
    scope.zone = zone_paths ? a.net.zone_of_node(ends[k]) : kNoIndex;
    scope.skip_branch = t;
    if (live[ends[k]]) {
      side[k] = CrankingPath{{ends[k]}, {}, 0.0};
    } else {
      side[k] = cranking_path(build_cranking_graph(a.net, scope), ends[k], live);
    }
    if (!side[k]) return TieOutcome::unreachable;
  }
  const auto comps = components(a.net);
  auto comp_of = [&](Index node) {
    for (Index c = 0; c < comps.size(); ++c) {
      if (std::binary_search(comps[c].nodes.begin(), comps[c].nodes.end(), node)) return c;
    }
    return kNoIndex;
  };
  const bool merges = comp_of(side[0]->nodes.back()) != comp_of(side[1]->nodes.back());

  std::vector<Event> events = expand_to_breakers(a.net, *side[0]);
  events.push_back({0.0, EventKind::close_branch, br.id, 0, 0, 0, "tie"});
  for (auto& e : expand_to_breakers(a.net, *side[1])) events.push_back(std::move(e));
  events = dedupe(std::move(events));
  if (merges) events.push_back({0.0, EventKind::synchronize, br.id, 0, 0, 0, "tie"});

  return execute(a, cfg, 3, "tie_close " + br.id, std::move(events), cfg.t_event_s, br.from_node, std::nullopt,
                 false)
             ? TieOutcome::closed
             : TieOutcome::failed;
}

void stage3(Area& a, const Config& cfg) {
  a.skipped_gens.clear();
  a.skipped_loads.clear();
  const auto ties = tie_branches(a.net);
  std::set<Index> attempted;
  for (Index t : ties) {
    if (a.infeasible) return;
    if (close_tie(a, cfg, t, true) != TieOutcome::unreachable) attempted.insert(t);
  }

  Rules rules;
  rules.stage = 3;
  rules.load_allowed = [](const Area& ar, Index l) {
    const auto& load = ar.net.loads[l];
    return load.is_critical || !cl_pending_in_zone(ar, ar.net.zone_of_node(load.node));
  };
  rules.gen_allowed = [](const Area&, Index) { return true; };
  const double beta = cfg.criterion4_beta;
  rules.stop = [beta](const Area& ar) { return stopping_met(ar.net, beta); };
  pickup_loop(a, cfg, rules);

  for (Index t : ties) {
    if (a.infeasible) return;
    if (attempted.contains(t)) continue;
    if (close_tie(a, cfg, t, false) == TieOutcome::unreachable) {
      a.warnings.push_back(fmt::format("tie '{}' has an end with no energized area; left open",
                                       a.net.branches[t].id));
    }
  }
}

/// Served stack rebuilt from committed steps: increments push, sheds remove
/// the newest slice of the same load.
void rebuild_served(const Network& net, std::span<const Step> steps, std::vector<ServedIncrement>& served,
                    std::set<Index>& capped) {
  std::map<Index, double> level;
  for (const auto& step : steps) {
    for (const auto& e : step.events) {
      if (e.kind != EventKind::load_increment && e.kind != EventKind::load_shed) continue;
      const Index l = net.find(ElementKind::load, e.element);
      if (e.kind == EventKind::load_increment) {
        served.push_back({l, e.mw - level[l]});
      } else {
        capped.insert(l);
        for (auto it = served.rbegin(); it != served.rend(); ++it) {
          if (it->load == l) {
            served.erase(std::next(it).base());
            break;
          }
        }
      }
      level[l] = e.mw;
    }
  }
}

void run_areas(std::vector<Area>& areas, const Config& cfg) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(areas.size());
  auto worker = [&] {
    for (std::size_t i; (i = next++) < areas.size();) {
      try {
        stage1(areas[i], cfg);
        stage2(areas[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), areas.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

PlanResult run(const Network& blackout, const Config& config) {
  config.validate();
  const double beta = config.criterion4_beta;
  PlanResult out;
  auto& plan = out.plan;

  std::vector<Step> steps;
  std::vector<Violation> violations;
  std::string diagnostic;
  bool infeasible = false;
  Area system;
  system.scope = "system";
  system.share_mw = beta * total_demand_mw(blackout);

  if (config.parallel_subareas && !blackout.zones.empty()) {
    std::vector<Area> areas(blackout.zones.size());
    for (Index z = 0; z < areas.size(); ++z) {
      areas[z].net = blackout;
      areas[z].zone = z;
      areas[z].scope = blackout.zones[z].id;
      areas[z].strict_share = true;
      areas[z].share_mw = beta * total_demand_mw(blackout, z);
    }
    run_areas(areas, config);

    struct Keyed {
      double time;
      Index zone;
      std::size_t seq;
      const Step* step;
    };
    std::vector<Keyed> merged;
    double clock = 0.0;
    for (Index z = 0; z < areas.size(); ++z) {
      for (std::size_t s = 0; s < areas[z].steps.size(); ++s) merged.push_back({areas[z].steps[s].time_s, z, s, &areas[z].steps[s]});
      clock = std::max(clock, areas[z].clock);
      for (auto& v : areas[z].violations) violations.push_back(v);
      for (auto& w : areas[z].warnings) plan.warnings.push_back(w);
      if (areas[z].infeasible && !infeasible) {
        infeasible = true;
        diagnostic = fmt::format("zone {}: {}", areas[z].scope, areas[z].diagnostic);
      }
    }
    std::sort(merged.begin(), merged.end(), [](const Keyed& a, const Keyed& b) {
      return std::tie(a.time, a.zone, a.seq) < std::tie(b.time, b.zone, b.seq);
    });

    system.net = blackout;
    for (const auto& k : merged) {
      for (const auto& e : k.step->events) apply_event(system.net, e);
      steps.push_back(*k.step);
    }
    rebuild_served(system.net, steps, system.served, system.capped);
    for (auto& a : areas) {
      for (auto& [g, p] : a.output) system.output[g] = p;
    }
    system.clock = clock;

    if (!infeasible) {
      stage3(system, config);
      for (auto& s : system.steps) steps.push_back(std::move(s));
    }
  } else {
    system.net = blackout;
    stage1(system, config);
    stage2(system, config);
    steps = std::move(system.steps);
  }
  for (auto& v : system.violations) violations.push_back(std::move(v));
  for (auto& w : system.warnings) plan.warnings.push_back(std::move(w));
  if (system.infeasible && !infeasible) {
    infeasible = true;
    diagnostic = system.diagnostic;
  }
  std::stable_sort(violations.begin(), violations.end(),
                   [](const Violation& a, const Violation& b) { return a.first_seen_s < b.first_seen_s; });

  plan.steps = std::move(steps);
  plan.violation_log = std::move(violations);
  plan.statistics.total_load_mw = total_demand_mw(system.net);
  plan.statistics.served_mw = served_mw(system.net);
  plan.statistics.restored_pct =
      plan.statistics.total_load_mw > 0.0 ? 100.0 * plan.statistics.served_mw / plan.statistics.total_load_mw : 0.0;
  plan.statistics.duration_s = system.clock;
  for (const auto& s : plan.steps) {
    for (const auto& e : s.events) {
      if (e.cause.starts_with("remedy:")) ++plan.statistics.remediation_events;
    }
  }

  if (infeasible) {
    plan.status = PlanStatus::infeasible;
    plan.diagnostic = diagnostic;
  } else if (stopping_met(system.net, beta)) {
    plan.status = PlanStatus::complete;
  } else {
    plan.status = PlanStatus::partial;
    plan.diagnostic = fmt::format("candidates exhausted at {:.2f} % of demand served (target {:.2f} %)",
                                  plan.statistics.restored_pct, 100.0 * beta);
  }
  out.final_network = std::move(system.net);
  return out;
}

}  // namespace restore
