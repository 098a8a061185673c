#include "restore/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "restore/solver.hpp"

namespace restore {

namespace {

using ojson = nlohmann::ordered_json;

double pct(double part, double whole) { return whole > 0.0 ? std::clamp(100.0 * part / whole, 0.0, 100.0) : 0.0; }

template <class T>
void read_field(const ojson& obj, const char* key, T& into, std::set<std::string>& used) {
  if (!obj.contains(key)) return;
  used.insert(key);
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw CaseError(fmt::format("config key '{}' has the wrong type", key));
  }
}

}  // namespace

Config parse_config(std::string_view text) {
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CaseError(fmt::format("config syntax error at byte {}", e.byte));
  }
  if (!root.is_object()) throw CaseError("config must be a JSON object");

  Config c;
  std::set<std::string> used;
  read_field(root, "criterion1_alpha", c.criterion1_alpha, used);
  std::string key2(to_string(c.criterion2_key)), key3(to_string(c.criterion3_key));
  read_field(root, "criterion2_key", key2, used);
  read_field(root, "criterion3_key", key3, used);
  if (auto k = gen_key_from_string(key2)) {
    c.criterion2_key = *k;
  } else {
    throw CaseError(fmt::format("unknown criterion2_key '{}'", key2));
  }
  if (auto k = load_key_from_string(key3)) {
    c.criterion3_key = *k;
  } else {
    throw CaseError(fmt::format("unknown criterion3_key '{}'", key3));
  }
  read_field(root, "criterion4_beta", c.criterion4_beta, used);
  read_field(root, "load_inc_mw", c.load_inc_mw, used);
  read_field(root, "parallel_subareas", c.parallel_subareas, used);
  read_field(root, "gen_vref_pu", c.gen_vref_pu, used);
  read_field(root, "t_load_s", c.t_load_s, used);
  read_field(root, "t_event_s", c.t_event_s, used);
  read_field(root, "device_times_advance_clock", c.device_times_advance_clock, used);
  read_field(root, "nadir_factor", c.monitor.nadir_factor, used);
  read_field(root, "vref_step_pu", c.monitor.vref_step_pu, used);
  read_field(root, "vref_min_pu", c.monitor.vref_min_pu, used);
  read_field(root, "vref_max_pu", c.monitor.vref_max_pu, used);
  read_field(root, "lcdf_max_rounds", c.monitor.lcdf_max_rounds, used);
  read_field(root, "max_remedies", c.monitor.max_remedies, used);
  read_field(root, "pf_tolerance", c.monitor.solve.tolerance_pu, used);
  read_field(root, "pf_max_iter", c.monitor.solve.max_iterations, used);
  read_field(root, "jobs", c.jobs, used);
  if (root.contains("limits")) {
    used.insert("limits");
    const auto& lim = root.at("limits");
    if (!lim.is_object()) throw CaseError("config key 'limits' must be an object");
    std::set<std::string> lused;
    auto& l = c.limits;
    read_field(lim, "v_instant_min", l.v_instant_min, lused);
    read_field(lim, "v_instant_max", l.v_instant_max, lused);
    read_field(lim, "v_sustained_min", l.v_sustained_min, lused);
    read_field(lim, "v_sustained_max", l.v_sustained_max, lused);
    read_field(lim, "v_duration_s", l.v_duration_s, lused);
    read_field(lim, "f_instant_min", l.f_instant_min, lused);
    read_field(lim, "f_instant_max", l.f_instant_max, lused);
    read_field(lim, "f_sustained_min", l.f_sustained_min, lused);
    read_field(lim, "f_sustained_max", l.f_sustained_max, lused);
    read_field(lim, "f_duration_s", l.f_duration_s, lused);
    read_field(lim, "branch_max_pct", l.branch_max_pct, lused);
    for (const auto& [k, v] : lim.items()) {
      if (!lused.contains(k)) throw CaseError(fmt::format("unknown config key 'limits.{}'", k));
    }
  }
  for (const auto& [k, v] : root.items()) {
    if (!used.contains(k)) throw CaseError(fmt::format("unknown config key '{}'", k));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CaseError(e.what());
  }
  return c;
}

std::string serialize_config(const Config& c) {
  ojson j;
  j["criterion1_alpha"] = c.criterion1_alpha;
  j["criterion2_key"] = to_string(c.criterion2_key);
  j["criterion3_key"] = to_string(c.criterion3_key);
  j["criterion4_beta"] = c.criterion4_beta;
  j["load_inc_mw"] = c.load_inc_mw;
  j["parallel_subareas"] = c.parallel_subareas;
  j["gen_vref_pu"] = c.gen_vref_pu;
  j["t_load_s"] = c.t_load_s;
  j["t_event_s"] = c.t_event_s;
  j["device_times_advance_clock"] = c.device_times_advance_clock;
  j["nadir_factor"] = c.monitor.nadir_factor;
  j["vref_step_pu"] = c.monitor.vref_step_pu;
  j["vref_min_pu"] = c.monitor.vref_min_pu;
  j["vref_max_pu"] = c.monitor.vref_max_pu;
  j["lcdf_max_rounds"] = c.monitor.lcdf_max_rounds;
  j["max_remedies"] = c.monitor.max_remedies;
  j["pf_tolerance"] = c.monitor.solve.tolerance_pu;
  j["pf_max_iter"] = c.monitor.solve.max_iterations;
  j["jobs"] = c.jobs;
  const auto& l = c.limits;
  j["limits"] = {{"v_instant_min", l.v_instant_min},     {"v_instant_max", l.v_instant_max},
                 {"v_sustained_min", l.v_sustained_min}, {"v_sustained_max", l.v_sustained_max},
                 {"v_duration_s", l.v_duration_s},       {"f_instant_min", l.f_instant_min},
                 {"f_instant_max", l.f_instant_max},     {"f_sustained_min", l.f_sustained_min},
                 {"f_sustained_max", l.f_sustained_max}, {"f_duration_s", l.f_duration_s},
                 {"branch_max_pct", l.branch_max_pct}};
  return j.dump(1) + "\n";
}

RunReport build_report(const RestorationPlan& plan, const Network& net) {
  RunReport r;
  r.status = plan.status;
  r.duration_s = plan.statistics.duration_s;
  r.total_load_mw = total_demand_mw(net);
  r.served_mw = served_mw(net);
  r.restored_pct = pct(r.served_mw, r.total_load_mw);
  for (Index z = 0; z < net.zones.size(); ++z) {
    ZoneRestoration zr;
    zr.zone = net.zones[z].id;
    zr.total_mw = total_demand_mw(net, z);
    zr.served_mw = served_mw(net, z);
    zr.restored_pct = pct(zr.served_mw, zr.total_mw);
    r.zones.push_back(zr);
  }
  for (auto kind : {ViolationKind::frequency, ViolationKind::voltage, ViolationKind::branch}) {
    r.remediation_by_kind[std::string(to_string(kind))] = 0;
  }
  for (const auto& s : plan.steps) {
    for (const auto& e : s.events) {
      if (e.cause.starts_with("remedy:")) ++r.remediation_by_kind[e.cause.substr(7)];
    }
  }
  r.violations = plan.violation_log;
  r.warnings = plan.warnings;
  r.diagnostic = plan.diagnostic;
  return r;
}

std::string export_report(const RunReport& r) {
  ojson j;
  j["format"] = "restoration-report";
  j["version"] = 1;
  j["status"] = to_string(r.status);
  j["duration_s"] = r.duration_s;
  j["total_load_mw"] = r.total_load_mw;
  j["served_mw"] = r.served_mw;
  j["restored_pct"] = r.restored_pct;
  j["zones"] = ojson::array();
  for (const auto& z : r.zones) {
    j["zones"].push_back(
        {{"zone", z.zone}, {"total_mw", z.total_mw}, {"served_mw", z.served_mw}, {"restored_pct", z.restored_pct}});
  }
  j["remediation_events"] = ojson::object();
  for (const auto& [k, n] : r.remediation_by_kind) j["remediation_events"][k] = n;
  j["violations"] = ojson::array();
  for (const auto& v : r.violations) {
    j["violations"].push_back({{"kind", to_string(v.kind)},
                               {"element", v.element},
                               {"value", v.value},
                               {"tier", to_string(v.tier)},
                               {"first_seen_s", v.first_seen_s},
                               {"duration_s", v.duration_s},
                               {"resolved", v.resolved}});
  }
  j["warnings"] = r.warnings;
  j["diagnostic"] = r.diagnostic;
  return j.dump(1) + "\n";
}

Network load_blackout(const std::string& case_path, const std::string& overrides_path,
                      std::vector<std::string>* warnings) {
  const CaseFile file = parse_case(read_text_file(case_path));
  Network net = expand_node_breaker(file, warnings);
  std::vector<AvailabilityOverride> overrides;
  if (!overrides_path.empty()) overrides = parse_overrides(read_text_file(overrides_path));
  return apply_blackout(std::move(net), overrides);
}

ReplayResult replay_plan(const Network& blackout, const RestorationPlan& plan, const Config& config) {
  ReplayResult out;
  out.final_network = blackout;
  auto& net = out.final_network;
  SolveOptions opt = config.monitor.solve;
  opt.warm_start = nullptr;
  SustainedTracker tracker;
  auto problem = [&](std::string text) {
    out.ok = false;
    out.problems.push_back(std::move(text));
  };

  for (std::size_t k = 0; k < plan.steps.size(); ++k) {
    const Step& step = plan.steps[k];
    try {
      for (const auto& e : step.events) {
        if (e.time_s != step.time_s) problem(fmt::format("step {}: event time differs from step time", k));
        apply_event(net, e);
      }
    } catch (const ModelError& e) {
      problem(fmt::format("step {} ({}): {}", k, step.action, e.what()));
      return out;
    }
    Index zone = kNoIndex;
    if (step.scope != "system") {
      zone = net.zone_index(step.scope);
      if (zone == kNoIndex) {
        problem(fmt::format("step {}: unknown scope '{}'", k, step.scope));
        return out;
      }
    }
    // The state holds until the next step of the same scope.
    double until = plan.statistics.duration_s;
    for (std::size_t n = k + 1; n < plan.steps.size(); ++n) {
      if (plan.steps[n].scope == step.scope) {
        until = plan.steps[n].time_s;
        break;
      }
    }
    const Clock clock{step.time_s, std::max(0.0, until - step.time_s)};

    Step replayed = step;
    replayed.summary.clear();
    for (const auto& island : islands_in_scope(net, zone)) {
      try {
        const auto sol = solve_powerflow(net, island, opt);
        for (const auto& v : check(net, island, sol, config.limits, clock, tracker, config.monitor.nadir_factor)) {
          problem(fmt::format("step {} ({}) t={:.3f} s: {} {} violation at '{}' value {:.6f}", k, step.action,
                              step.time_s, to_string(v.tier), to_string(v.kind), v.element, v.value));
        }
        replayed.summary.push_back(summarize(net, island, sol));
      } catch (const SolverError& e) {
        problem(fmt::format("step {} ({}): solve failed: {}", k, step.action, e.what()));
      }
    }
    if (replayed.summary != step.summary) {
      problem(fmt::format("step {} ({}): replayed summary diverges from the recorded one", k, step.action));
    }
    out.replayed.push_back(std::move(replayed));
  }
  return out;
}

namespace {

Config load_config_file(const CliOptions& o) {
  Config c = o.config_path.empty() ? Config{} : parse_config(read_text_file(o.config_path));
  if (o.jobs) c.jobs = *o.jobs;
  c.validate();
  return c;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const CaseError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ModelError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const SolverError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitInputError;
}

int exit_for(PlanStatus status) {
  switch (status) {
    case PlanStatus::complete: return kExitComplete;
    case PlanStatus::partial: return kExitPartial;
    case PlanStatus::infeasible: return kExitInfeasible;
  }
  return kExitInputError;
}

}  // namespace

int cmd_plan(const CliOptions& o, std::ostream& err) {
  return guarded(err, [&] {
    if (o.case_path.empty()) throw CaseError("--case is required");
    const Config config = load_config_file(o);
    std::vector<std::string> warnings;
    const Network blackout = load_blackout(o.case_path, o.overrides_path, &warnings);
    auto result = run(blackout, config);
    auto& plan = result.plan;
    plan.warnings.insert(plan.warnings.begin(), warnings.begin(), warnings.end());

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_text_file((dir / "plan.json").string(), export_plan(plan));
    write_text_file((dir / "metrics.csv").string(), export_metrics(plan.steps));
    write_text_file((dir / "report.json").string(), export_report(build_report(plan, result.final_network)));
    write_text_file((dir / "final_state.json").string(), serialize_network(result.final_network));

    if (o.verbose) {
      for (const auto& w : plan.warnings) err << "warning: " << w << "\n";
    }
    err << fmt::format("{}: {} steps, {:.2f} % of demand served, {:.0f} s simulated\n", to_string(plan.status),
                       plan.steps.size(), plan.statistics.restored_pct, plan.statistics.duration_s);
    if (!plan.diagnostic.empty()) err << plan.diagnostic << "\n";
    return exit_for(plan.status);
  });
}

int cmd_validate(const CliOptions& o, std::ostream& err) {
  return guarded(err, [&] {
    if (o.case_path.empty()) throw CaseError("--case is required");
    const Config config = load_config_file(o);
    const std::string plan_path =
        o.plan_path.empty() ? (std::filesystem::path(o.out_dir) / "plan.json").string() : o.plan_path;
    const Network blackout = load_blackout(o.case_path, o.overrides_path, nullptr);
    const RestorationPlan plan = parse_plan(read_text_file(plan_path));
    const auto replay = replay_plan(blackout, plan, config);
    for (const auto& p : replay.problems) err << p << "\n";
    if (!replay.ok) {
      err << fmt::format("validation failed: {} problem(s)\n", replay.problems.size());
      return kExitInputError;
    }
    if (o.verbose) err << fmt::format("validated {} steps\n", plan.steps.size());
    return kExitComplete;
  });
}

int cmd_convert(const CliOptions& o, std::ostream& err) {
  return guarded(err, [&] {
    if (o.case_path.empty()) throw CaseError("--case is required");
    std::vector<std::string> warnings;
    const Network net = expand_node_breaker(parse_case(read_text_file(o.case_path)), &warnings);
    if (o.verbose) {
      for (const auto& w : warnings) err << "warning: " << w << "\n";
    }
    write_text_file(o.out_dir, serialize_network(net));
    return kExitComplete;
  });
}

int cmd_inspect(const CliOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.case_path.empty()) throw CaseError("--case is required");
    Network net = expand_node_breaker(parse_case(read_text_file(o.case_path)), nullptr);
    if (!o.overrides_path.empty()) {
      const auto overrides = parse_overrides(read_text_file(o.overrides_path));
      net = apply_blackout(std::move(net), overrides);
    }
    const auto islands = energized_islands(net);
    out << fmt::format("nodes {}  breakers {}  branches {}  generators {}  loads {}  shunts {}  zones {}\n",
                       net.nodes.size(), net.breakers.size(), net.branches.size(), net.generators.size(),
                       net.loads.size(), net.shunts.size(), net.zones.size());
    out << fmt::format("components {}  energized islands {}\n", components(net).size(), islands.size());
    for (const auto& island : islands) {
      const auto sol = solve_powerflow(net, island);
      const auto s = summarize(net, island, sol);
      out << fmt::format("island {} zones {} gen {:.3f} MW load {:.3f} MW f {:.4f} Hz v [{:.4f}, {:.4f}]\n",
                         s.island, s.zones, s.gen_mw, s.load_mw, s.frequency_hz, s.v_min_pu, s.v_max_pu);
    }
    out << fmt::format("{:<12}{:>14}{:>14}{:>10}\n", "zone", "demand_mw", "served_mw", "pct");
    for (Index z = 0; z < net.zones.size(); ++z) {
      const double total = total_demand_mw(net, z), served = served_mw(net, z);
      out << fmt::format("{:<12}{:>14.6f}{:>14.6f}{:>10.2f}\n", net.zones[z].id, total, served, pct(served, total));
    }
    const double total = total_demand_mw(net), served = served_mw(net);
    out << fmt::format("{:<12}{:>14.6f}{:>14.6f}{:>10.2f}\n", "system", total, served, pct(served, total));
    return kExitComplete;
  });
}

}  // namespace restore
