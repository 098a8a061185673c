#pragma once

// Builders, independent oracles and random case generators shared by the unit
// and acceptance tests. Oracles here deliberately avoid the library's own
// solver, pathfinder and topology code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "restore/caseio.hpp"
#include "restore/model.hpp"
#include "restore/plan.hpp"

namespace fixtures {

using restore::Index;
using restore::kNoIndex;

#ifndef RESTORE_DATA_DIR
#define RESTORE_DATA_DIR "data"
#endif

inline std::string data_path(const std::string& name) { return std::string(RESTORE_DATA_DIR) + "/" + name; }

/// Direct node-level network construction.
struct NetBuilder {
  restore::Network net;

  Index node(const std::string& id, double kv = 115.0, const std::string& substation = "") {
    net.nodes.push_back({id, substation.empty() ? id : substation, kv, restore::NodeKind::busbar});
    return net.nodes.size() - 1;
  }
  Index branch(const std::string& id, Index a, Index b, double r, double x, double bsh = 0.0,
               double rating = 100.0, bool closed = true) {
    restore::Branch br;
    br.id = id;
    br.from_node = a;
    br.to_node = b;
    br.r_pu = r;
    br.x_pu = x;
    br.b_pu = bsh;
    br.rating_mva = rating;
    br.closed = closed;
    net.branches.push_back(br);
    return net.branches.size() - 1;
  }
  Index breaker(const std::string& id, Index a, Index b, bool closed = true) {
    net.breakers.push_back({id, a, b, closed, true});
    return net.breakers.size() - 1;
  }
  Index gen(const std::string& id, Index at, double p_max, double p_min, double p_set, double s_rating = 100.0,
            double droop = 0.05, double v_set = 1.0) {
    restore::Generator g;
    g.id = id;
    g.node = at;
    g.p_max_mw = p_max;
    g.p_min_mw = p_min;
    g.p_set_mw = p_set;
    g.q_max_mvar = 999.0;
    g.q_min_mvar = -999.0;
    g.s_rating_mva = s_rating;
    g.droop_r_pu = droop;
    g.v_setpoint_pu = v_set;
    g.online = true;
    net.generators.push_back(g);
    return net.generators.size() - 1;
  }
  Index load(const std::string& id, Index at, double p, double q, double served_fraction = 1.0,
             bool critical = false) {
    restore::Load l;
    l.id = id;
    l.node = at;
    l.p_mw = p;
    l.q_mvar = q;
    l.is_critical = critical;
    l.serve(p * served_fraction);
    net.loads.push_back(l);
    return net.loads.size() - 1;
  }
  Index shunt(const std::string& id, Index at, double mvar, bool closed = false) {
    net.shunts.push_back({id, at, mvar, closed, true, true});
    return net.shunts.size() - 1;
  }
  restore::Network done() {
    net.reindex();
    return net;
  }
};

// ---------------------------------------------------------------------------
// Topology oracle: breadth-first search over closed elements.

inline std::vector<std::vector<Index>> bfs_components(const restore::Network& net) {
  const auto n = net.nodes.size();
  std::vector<std::vector<Index>> adj(n);
  for (const auto& b : net.breakers) {
    if (b.closed) {
      adj[b.from_node].push_back(b.to_node);
      adj[b.to_node].push_back(b.from_node);
    }
  }
  for (const auto& br : net.branches) {
    if (br.closed) {
      adj[br.from_node].push_back(br.to_node);
      adj[br.to_node].push_back(br.from_node);
    }
  }
  std::vector<bool> seen(n, false);
  std::vector<std::vector<Index>> out;
  for (Index s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<Index> comp, queue{s};
    seen[s] = true;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      comp.push_back(queue[q]);
      for (Index v : adj[queue[q]]) {
        if (!seen[v]) {
          seen[v] = true;
          queue.push_back(v);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(comp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Path oracle: exhaustive simple-path enumeration.

struct WeightedEdge {
  Index a, b;
  double w;
};

/// Cheapest simple path cost from `source` to any vertex in `targets`.
inline double brute_force_cost(std::size_t n, const std::vector<WeightedEdge>& edges, Index source,
                               const std::vector<bool>& targets) {
  std::vector<std::vector<std::pair<Index, double>>> adj(n);
  for (const auto& e : edges) {
    adj[e.a].push_back({e.b, e.w});
    adj[e.b].push_back({e.a, e.w});
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> on_path(n, false);
  std::function<void(Index, double)> dfs = [&](Index v, double cost) {
    if (targets[v]) {
      best = std::min(best, cost);
      return;  // a path through a target can never be cheaper than stopping here
    }
    on_path[v] = true;
    for (auto [u, w] : adj[v]) {
      if (!on_path[u]) dfs(u, cost + w);
    }
    on_path[v] = false;
  };
  dfs(source, 0.0);
  return best;
}

// ---------------------------------------------------------------------------
// Admittance oracle assembled per node pair, then folded through a private
// union-find of closed zero-impedance elements.

struct NodeYbus {
  std::vector<Index> group;  // node -> representative
  std::map<std::pair<Index, Index>, std::complex<double>> y;  // keyed by representatives
};

inline NodeYbus oracle_ybus(const restore::Network& net, const std::vector<Index>& nodes) {
  NodeYbus out;
  const auto n = net.nodes.size();
  out.group.resize(n);
  std::iota(out.group.begin(), out.group.end(), Index{0});
  std::function<Index(Index)> root = [&](Index v) { return out.group[v] == v ? v : out.group[v] = root(out.group[v]); };
  auto in = [&](Index v) { return std::binary_search(nodes.begin(), nodes.end(), v); };
  for (const auto& b : net.breakers) {
    if (b.closed && in(b.from_node)) out.group[root(b.from_node)] = root(b.to_node);
  }
  for (const auto& br : net.branches) {
    if (br.closed && in(br.from_node) && br.r_pu == 0.0 && br.x_pu == 0.0) {
      out.group[root(br.from_node)] = root(br.to_node);
    }
  }
  for (Index v = 0; v < n; ++v) out.group[v] = root(v);
  auto add = [&](Index a, Index b, std::complex<double> v) { out.y[{out.group[a], out.group[b]}] += v; };
  for (const auto& br : net.branches) {
    if (!br.closed || !in(br.from_node) || (br.r_pu == 0.0 && br.x_pu == 0.0)) continue;
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r_pu, br.x_pu);
    const std::complex<double> half(0.0, br.b_pu / 2.0);
    add(br.from_node, br.from_node, ys + half);
    add(br.to_node, br.to_node, ys + half);
    add(br.from_node, br.to_node, -ys);
    add(br.to_node, br.from_node, -ys);
  }
  for (const auto& s : net.shunts) {
    if (s.closed && in(s.node)) add(s.node, s.node, {0.0, s.mvar_nominal / net.base_mva});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frequency oracle: bisection on the per-unit deviation w with every unit
// clamped to its limits.

struct DroopUnit {
  double p_set, p_min, p_max, gain_mw;
};

inline double bisection_frequency(const std::vector<DroopUnit>& units, double delta_p_mw, double f0) {
  auto absorbed = [&](double w) {
    double s = 0.0;
    for (const auto& u : units) s += std::clamp(u.p_set - u.gain_mw * w, u.p_min, u.p_max) - u.p_set;
    return s - delta_p_mw;  // decreasing in w
  };
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (absorbed(mid) > 0.0 ? lo : hi) = mid;
  }
  return f0 * (1.0 + 0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Bus-branch AC oracle: governor power flow on the case's bus model, with a
// finite-difference Jacobian.

struct BusSolution {
  std::map<std::string, double> v, angle;
  double w = 0.0;
  double max_mismatch = 0.0;
};

inline BusSolution oracle_bus_branch_pf(const restore::CaseFile& f) {
  const auto n = f.buses.size();
  std::map<std::string, Index> idx;
  for (Index i = 0; i < n; ++i) idx[f.buses[i].id] = i;
  const double base = f.base_mva;

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : f.branches) {
    if (!br.available) continue;
    const Index a = idx[br.from_bus], b = idx[br.to_bus];
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r_pu, br.x_pu);
    y(a, a) += ys + std::complex<double>(0, br.b_pu / 2);
    y(b, b) += ys + std::complex<double>(0, br.b_pu / 2);
    y(a, b) -= ys;
    y(b, a) -= ys;
  }
  for (const auto& s : f.shunts) {
    if (s.available) y(idx[s.bus], idx[s.bus]) += std::complex<double>(0, s.mvar_nominal / base);
  }

  std::vector<double> p_load(n, 0.0), q_load(n, 0.0), p_set(n, 0.0), gain(n, 0.0), v_set(n, 0.0);
  std::vector<bool> pv(n, false);
  for (const auto& l : f.loads) {
    if (!l.available) continue;
    p_load[idx[l.bus]] += l.p_mw / base;
    q_load[idx[l.bus]] += l.q_mvar / base;
  }
  Index ref = kNoIndex;
  const restore::CaseGenerator* ref_gen = nullptr;
  for (const auto& g : f.generators) {
    if (!g.available) continue;
    const Index b = idx[g.bus];
    pv[b] = true;
    v_set[b] = g.v_setpoint_pu;
    p_set[b] += g.p_mw / base;
    gain[b] += g.s_rating_mva.value_or(g.p_max_mw) / g.droop_r_pu.value_or(0.05) / base;
    if (!ref_gen || g.p_max_mw > ref_gen->p_max_mw || (g.p_max_mw == ref_gen->p_max_mw && g.id < ref_gen->id)) {
      ref_gen = &g;
      ref = b;
    }
  }

  std::vector<Index> th_var, v_var;
  for (Index i = 0; i < n; ++i) {
    if (i != ref) th_var.push_back(i);
    if (!pv[i]) v_var.push_back(i);
  }
  const auto m = th_var.size() + v_var.size() + 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  for (std::size_t k = 0; k < v_var.size(); ++k) x(th_var.size() + k) = 1.0;

  auto state = [&](const Eigen::VectorXd& xv, std::vector<double>& th, std::vector<double>& vm, double& w) {
    th.assign(n, 0.0);
    vm = v_set;
    for (std::size_t k = 0; k < th_var.size(); ++k) th[th_var[k]] = xv(k);
    for (std::size_t k = 0; k < v_var.size(); ++k) vm[v_var[k]] = xv(th_var.size() + k);
    w = xv(m - 1);
  };
  auto residual = [&](const Eigen::VectorXd& xv) {
    std::vector<double> th, vm;
    double w;
    state(xv, th, vm, w);
    Eigen::VectorXcd v(n);
    for (Index i = 0; i < n; ++i) v(i) = std::polar(vm[i], th[i]);
    const Eigen::VectorXcd s = v.cwiseProduct((y * v).conjugate());
    Eigen::VectorXd r(m);
    std::size_t row = 0;
    for (Index i = 0; i < n; ++i) r(row++) = s(i).real() - (p_set[i] - gain[i] * w - p_load[i]);
    for (Index i : v_var) r(row++) = s(i).imag() + q_load[i];
    return r;
  };

  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd r = residual(x);
    if (r.cwiseAbs().maxCoeff() < 1e-13) break;
    Eigen::MatrixXd jac(m, m);
    for (std::size_t c = 0; c < m; ++c) {
      const double h = 1e-7;
      Eigen::VectorXd xp = x, xm = x;
      xp(c) += h;
      xm(c) -= h;
      jac.col(c) = (residual(xp) - residual(xm)) / (2 * h);
    }
    x -= jac.fullPivLu().solve(r);
  }
  BusSolution out;
  std::vector<double> th, vm;
  state(x, th, vm, out.w);
  for (Index i = 0; i < n; ++i) {
    out.v[f.buses[i].id] = vm[i];
    out.angle[f.buses[i].id] = th[i];
  }
  out.max_mismatch = residual(x).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// DC close-and-re-solve oracle: rebuild B with the candidate in service and
// solve for the monitored flow directly.

struct DcLine {
  Index from, to;  // dense bus indices
  double x;
};

inline double dc_flow_oracle(std::size_t buses, const std::vector<DcLine>& lines, const std::vector<double>& p_pu,
                             Index reference, std::size_t monitored) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(buses, buses);
  for (const auto& l : lines) {
    b(l.from, l.from) += 1 / l.x;
    b(l.to, l.to) += 1 / l.x;
    b(l.from, l.to) -= 1 / l.x;
    b(l.to, l.from) -= 1 / l.x;
  }
  std::vector<Eigen::Index> keep;
  for (Index i = 0; i < buses; ++i) {
    if (i != reference) keep.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd red(keep.size(), keep.size());
  Eigen::VectorXd rhs(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    rhs(r) = p_pu[keep[r]];
    for (std::size_t c = 0; c < keep.size(); ++c) red(r, c) = b(keep[r], keep[c]);
  }
  const Eigen::VectorXd sol = red.fullPivLu().solve(rhs);
  std::vector<double> th(buses, 0.0);
  for (std::size_t r = 0; r < keep.size(); ++r) th[keep[r]] = sol(r);
  const auto& m = lines[monitored];
  return (th[m.from] - th[m.to]) / m.x;
}

// ---------------------------------------------------------------------------
// Random bus-branch cases: chained zones with a blackstart unit, optional
// non-blackstart unit, critical and non-critical loads and tie lines.

inline restore::CaseFile random_case(unsigned seed, int zones = 3) {
  std::mt19937 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  restore::CaseFile f;
  f.base_mva = 100.0;
  std::vector<std::vector<std::string>> zone_buses(zones);
  for (int z = 0; z < zones; ++z) {
    restore::CaseZone zone;
    zone.id = fmt::format("Z{}", z);
    const int nb = pick(3, 5);
    for (int b = 0; b < nb; ++b) {
      const std::string id = fmt::format("Z{}B{}", z, b);
      f.buses.push_back({id, b == 0 ? 230.0 : (b % 2 ? 115.0 : 69.0)});
      f.substations.push_back({"S" + id, {id}});
      zone.substations.push_back("S" + id);
      zone_buses[z].push_back(id);
      if (b > 0) {
        const std::string from = zone_buses[z][static_cast<std::size_t>(pick(0, b - 1))];
        f.branches.push_back({fmt::format("L{}_{}", from, id), from, id, 0.005, uni(0.03, 0.08), 0.02, 250.0});
      }
    }
    const bool has_bsu = z == 0 || pick(0, 4) > 0;
    if (has_bsu) {
      restore::CaseGenerator g;
      g.id = fmt::format("G{}bs", z);
      g.bus = zone_buses[z][0];
      g.p_max_mw = uni(60, 140);
      g.q_max_mvar = 0.6 * g.p_max_mw;
      g.q_min_mvar = -0.3 * g.p_max_mw;
      g.is_blackstart = true;
      g.s_rating_mva = g.p_max_mw / 0.9;
      g.droop_r_pu = 0.05;
      g.v_setpoint_pu = 1.02;
      f.generators.push_back(g);
      zone.blackstart_generators.push_back(g.id);
    }
    if (pick(0, 1) == 1) {
      restore::CaseGenerator g;
      g.id = fmt::format("G{}nb", z);
      g.bus = zone_buses[z][static_cast<std::size_t>(pick(0, nb - 1))];
      g.p_max_mw = uni(50, 150);
      g.p_min_mw = uni(2, 10);
      g.q_max_mvar = 0.6 * g.p_max_mw;
      g.q_min_mvar = -0.3 * g.p_max_mw;
      g.s_rating_mva = g.p_max_mw / 0.9;
      g.droop_r_pu = 0.05;
      g.v_setpoint_pu = 1.02;
      f.generators.push_back(g);
    }
    for (int b = 1; b < nb; ++b) {
      restore::CaseLoad l;
      l.id = fmt::format("L{}_{}", z, b);
      l.bus = zone_buses[z][static_cast<std::size_t>(b)];
      l.p_mw = std::round(uni(8, 45));
      l.q_mvar = std::round(0.25 * l.p_mw);
      l.is_critical = b == 1 || pick(0, 3) == 0;
      if (l.is_critical) zone.critical_loads.push_back(l.id);
      f.loads.push_back(l);
    }
    f.zones.push_back(zone);
  }
  for (int z = 1; z < zones; ++z) {
    const auto& a = zone_buses[z - 1];
    const auto& b = zone_buses[z];
    const std::string from = a[static_cast<std::size_t>(pick(0, static_cast<int>(a.size()) - 1))];
    const std::string to = b[static_cast<std::size_t>(pick(0, static_cast<int>(b.size()) - 1))];
    f.branches.push_back({fmt::format("TIE{}_{}", z - 1, z), from, to, 0.005, uni(0.03, 0.06), 0.02, 250.0});
  }
  return f;
}

// ---------------------------------------------------------------------------
// Stage discipline and timeline audit by stepwise replay of a plan.

inline std::vector<std::string> audit_plan(const restore::Network& start, const restore::RestorationPlan& plan) {
  using namespace restore;
  std::vector<std::string> problems;
  Network net = start;
  std::map<std::string, double> scope_clock;
  std::map<Index, std::string> ncl_picked;  // zone -> first non-critical pickup
  double prev = 0.0;
  for (const auto& step : plan.steps) {
    if (step.time_s < prev) problems.push_back(fmt::format("step at {} s precedes {} s", step.time_s, prev));
    prev = step.time_s;
    auto clk = scope_clock.find(step.scope);
    if (clk != scope_clock.end() && step.time_s <= clk->second) {
      problems.push_back(fmt::format("scope {} does not advance at {} s", step.scope, step.time_s));
    }
    scope_clock[step.scope] = step.time_s;

    for (const auto& e : step.events) {
      if (e.time_s != step.time_s) problems.push_back(fmt::format("event {} off its step time", e.element));
      if (e.kind == EventKind::load_increment && e.cause == "pickup") {
        const auto& load = net.loads[net.find(ElementKind::load, e.element)];
        const Index zone = net.zone_of_node(load.node);
        if (!load.is_critical) {
          ncl_picked.emplace(zone, load.id);
        } else if (ncl_picked.contains(zone)) {
          problems.push_back(fmt::format("critical {} picked up after non-critical {}", load.id, ncl_picked[zone]));
        }
      }
      if (e.kind == EventKind::load_shed && net.loads[net.find(ElementKind::load, e.element)].is_critical) {
        const Index node = net.loads[net.find(ElementKind::load, e.element)].node;
        for (const auto& c : restore::components(net)) {
          if (!std::binary_search(c.nodes.begin(), c.nodes.end(), node)) continue;
          for (Index l : c.loads) {
            if (!net.loads[l].is_critical && net.loads[l].served_mw > 1e-9) {
              problems.push_back(fmt::format("critical {} shed while {} is served", e.element, net.loads[l].id));
            }
          }
        }
      }
      restore::apply_event(net, e);
    }
  }
  return problems;
}

}  // namespace fixtures
