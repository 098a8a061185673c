#include "restore/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace restore {

namespace {

using cd = std::complex<double>;

Index root_of(std::vector<Index>& parent, Index i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

bool is_series_branch(const Branch& br) { return br.closed && !br.zero_impedance; }

}  // namespace

// ---------------------------------------------------------------------------

Index BusMap::bus_of(Index node) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
  if (it == nodes.end() || *it != node) return kNoIndex;
  return bus_of_node[static_cast<std::size_t>(it - nodes.begin())];
}

BusMap collapse_island(const Network& network, const Island& island) {
  BusMap map;
  map.nodes = island.nodes;
  std::sort(map.nodes.begin(), map.nodes.end());
  const auto n = map.nodes.size();

  auto local = [&](Index node) {
    auto it = std::lower_bound(map.nodes.begin(), map.nodes.end(), node);
    return (it != map.nodes.end() && *it == node) ? static_cast<Index>(it - map.nodes.begin()) : kNoIndex;
  };
  std::vector<Index> parent(n);
  std::iota(parent.begin(), parent.end(), Index{0});
  auto join = [&](Index a, Index b) {
    Index la = local(a), lb = local(b);
    if (la == kNoIndex || lb == kNoIndex) return;
    Index ra = root_of(parent, la), rb = root_of(parent, lb);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  };
  for (const auto& b : network.breakers) {
    if (b.closed) join(b.from_node, b.to_node);
  }
  for (const auto& br : network.branches) {
    if (br.closed && br.zero_impedance) join(br.from_node, br.to_node);
  }

  map.bus_of_node.assign(n, kNoIndex);
  std::vector<Index> bus_of_root(n, kNoIndex);
  for (Index i = 0; i < n; ++i) {
    Index r = root_of(parent, i);
    if (bus_of_root[r] == kNoIndex) {
      bus_of_root[r] = map.bus_nodes.size();
      map.bus_nodes.emplace_back();
    }
    map.bus_of_node[i] = bus_of_root[r];
    map.bus_nodes[bus_of_root[r]].push_back(map.nodes[i]);
  }
  return map;
}

AdmittanceMatrix build_ybus(const Network& network, const Island& island) {
  AdmittanceMatrix out;
  out.buses = collapse_island(network, island);
  const auto nb = static_cast<Eigen::Index>(out.buses.bus_count());
  out.y = Eigen::MatrixXcd::Zero(nb, nb);

  for (const auto& br : network.branches) {
    if (!is_series_branch(br)) continue;
    Index f = out.buses.bus_of(br.from_node);
    Index t = out.buses.bus_of(br.to_node);
    if (f == kNoIndex || t == kNoIndex) continue;
    const cd y_series = 1.0 / cd(br.r_pu, br.x_pu);
    const cd y_charge(0.0, br.b_pu / 2.0);
    const auto fi = static_cast<Eigen::Index>(f), ti = static_cast<Eigen::Index>(t);
    out.y(fi, fi) += y_series + y_charge;
    out.y(ti, ti) += y_series + y_charge;
    out.y(fi, ti) -= y_series;
    out.y(ti, fi) -= y_series;
  }
  for (const auto& s : network.shunts) {
    if (!s.closed) continue;
    Index k = out.buses.bus_of(s.node);
    if (k == kNoIndex) continue;
    out.y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += cd(0.0, s.mvar_nominal / network.base_mva);
  }
  return out;
}

// ---------------------------------------------------------------------------

bool SolutionState::contains(Index node) const {
  return std::binary_search(nodes.begin(), nodes.end(), node);
}

double SolutionState::voltage(Index node) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
  if (it == nodes.end() || *it != node) return 0.0;
  return v_pu[static_cast<std::size_t>(it - nodes.begin())];
}

double SolutionState::angle(Index node) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
  if (it == nodes.end() || *it != node) return 0.0;
  return angle_rad[static_cast<std::size_t>(it - nodes.begin())];
}

const GeneratorResult* SolutionState::generator(Index g) const {
  for (const auto& r : generators) {
    if (r.generator == g) return &r;
  }
  return nullptr;
}

Index reference_generator(const Network& network, const Island& island) {
  Index best = kNoIndex;
  for (Index g : island.generators) {
    const auto& gen = network.generators[g];
    if (!gen.online) continue;
    if (best == kNoIndex) {
      best = g;
      continue;
    }
    const auto& b = network.generators[best];
    if (gen.p_max_mw > b.p_max_mw || (gen.p_max_mw == b.p_max_mw && gen.id < b.id)) best = g;
  }
  return best;
}

namespace {

enum class BusType { pq, pv, slack };

struct UnitState {
  Index gen;
  Index bus;
  double gain_pu;   // MW-per-unit-frequency gain on the system base
  double fixed_pu;  // output when clamped
  bool free = true;
};

class NewtonSolver {
 public:
  NewtonSolver(const Network& net, const Island& island, const SolveOptions& opt)
      : net_(net), island_(island), opt_(opt), ybus_(build_ybus(net, island)) {
    const auto& buses = ybus_.buses;
    nb_ = buses.bus_count();
    base_ = net.base_mva;

    ref_gen_ = reference_generator(net, island);
    if (ref_gen_ == kNoIndex) {
      throw SolverError(SolverError::Kind::topology, "island has no online generator");
    }
    slack_ = buses.bus_of(net.generators[ref_gen_].node);

    type_.assign(nb_, BusType::pq);
    vset_.assign(nb_, 1.0);
    q_fixed_.assign(nb_, 0.0);
    p_load_.assign(nb_, 0.0);
    q_load_.assign(nb_, 0.0);

    for (Index l : island.loads) {
      const auto& load = net.loads[l];
      Index b = buses.bus_of(load.node);
      p_load_[b] += load.served_mw / base_;
      q_load_[b] += load.served_mvar / base_;
    }

    std::vector<Index> gens;
    for (Index g : island.generators) {
      if (net.generators[g].online) gens.push_back(g);
    }
    std::sort(gens.begin(), gens.end(),
              [&](Index a, Index b) { return net.generators[a].id < net.generators[b].id; });
    std::vector<bool> has_vset(nb_, false);
    for (Index g : gens) {
      const auto& gen = net.generators[g];
      Index b = buses.bus_of(gen.node);
      double gain = opt.distribute_mismatch ? gen.governor_gain_mw() / base_ : (g == ref_gen_ ? 10.0 : 0.0);
      UnitState u{g, b, gain, gen.p_set_mw / base_, gain > 0.0};
      units_.push_back(u);
      if (type_[b] == BusType::pq) type_[b] = BusType::pv;
      if (!has_vset[b]) {
        vset_[b] = gen.v_setpoint_pu;
        has_vset[b] = true;
      }
    }
    type_[slack_] = BusType::slack;
    vset_[slack_] = net.generators[ref_gen_].v_setpoint_pu;

    v_.assign(nb_, 1.0);
    th_.assign(nb_, 0.0);
    if (opt.warm_start) {
      for (Index b = 0; b < nb_; ++b) {
        Index node = buses.bus_nodes[b].front();
        if (opt.warm_start->contains(node)) {
          double v = opt.warm_start->voltage(node);
          if (v > 0.3) {
            v_[b] = v;
            th_[b] = opt.warm_start->angle(node);
          }
        }
      }
      double shift = th_[slack_];
      for (auto& t : th_) t -= shift;
    }
  }

  SolutionState solve() {
    int total_iterations = 0;
    for (int outer = 0; outer < 4 * static_cast<int>(units_.size() + nb_) + 4; ++outer) {
      if (std::none_of(units_.begin(), units_.end(), [](const UnitState& u) { return u.free; })) {
        throw SolverError(SolverError::Kind::infeasible,
                          "every unit is at a limit; the island cannot balance", last_mismatch_);
      }
      total_iterations += newton();
      if (opt_.distribute_mismatch && clamp_units()) continue;
      if (opt_.enforce_q_limits && apply_q_limits()) continue;
      return result(total_iterations);
    }
    throw SolverError(SolverError::Kind::nonconvergence, "limit switching did not settle", last_mismatch_);
  }

 private:
  double unit_output(const UnitState& u) const { return u.free ? u.fixed_pu - u.gain_pu * w_ : u.fixed_pu; }

  void calc(std::vector<double>& p, std::vector<double>& q) const {
    p.assign(nb_, 0.0);
    q.assign(nb_, 0.0);
    const auto& y = ybus_.y;
    for (Index i = 0; i < nb_; ++i) {
      for (Index k = 0; k < nb_; ++k) {
        const cd yik = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        if (yik == cd(0.0, 0.0)) continue;
        const double t = th_[i] - th_[k];
        const double c = std::cos(t), s = std::sin(t);
        p[i] += v_[i] * v_[k] * (yik.real() * c + yik.imag() * s);
        q[i] += v_[i] * v_[k] * (yik.real() * s - yik.imag() * c);
      }
    }
  }

  // Mismatch vector ordered [P all buses | Q for PQ buses].
  Eigen::VectorXd mismatch(const std::vector<double>& p, const std::vector<double>& q) const {
    std::vector<double> pg(nb_, 0.0);
    for (const auto& u : units_) pg[u.bus] += unit_output(u);
    Eigen::VectorXd f(static_cast<Eigen::Index>(nb_ + pq_.size()));
    for (Index i = 0; i < nb_; ++i) f(static_cast<Eigen::Index>(i)) = pg[i] - p_load_[i] - p[i];
    for (Index r = 0; r < pq_.size(); ++r) {
      Index i = pq_[r];
      f(static_cast<Eigen::Index>(nb_ + r)) = q_fixed_[i] - q_load_[i] - q[i];
    }
    return f;
  }

  int newton() {
    // Unknown layout: theta (non-slack) | V (PQ) | w.
    th_idx_.assign(nb_, kNoIndex);
    v_idx_.assign(nb_, kNoIndex);
    pq_.clear();
    Index col = 0;
    for (Index i = 0; i < nb_; ++i) {
      if (type_[i] != BusType::slack) th_idx_[i] = col++;
    }
    for (Index i = 0; i < nb_; ++i) {
      if (type_[i] == BusType::pq) {
        v_idx_[i] = col++;
        pq_.push_back(i);
      } else {
        v_[i] = vset_[i];
      }
    }
    const Index w_col = col++;
    const auto n = static_cast<Eigen::Index>(col);

    std::vector<double> p, q;
    for (int it = 0; it <= opt_.max_iterations; ++it) {
      calc(p, q);
      Eigen::VectorXd f = mismatch(p, q);
      last_mismatch_ = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
      if (!std::isfinite(last_mismatch_)) break;
      if (last_mismatch_ <= opt_.tolerance_pu) return it;
      if (it == opt_.max_iterations) break;

      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
      const auto& y = ybus_.y;
      for (Index i = 0; i < nb_; ++i) {
        const auto ri = static_cast<Eigen::Index>(i);
        const double gii = y(ri, ri).real(), bii = y(ri, ri).imag();
        for (Index k = 0; k < nb_; ++k) {
          const auto rk = static_cast<Eigen::Index>(k);
          const cd yik = y(ri, rk);
          double dp_dth, dp_dv, dq_dth, dq_dv;
          if (i == k) {
            dp_dth = -q[i] - bii * v_[i] * v_[i];
            dp_dv = p[i] / v_[i] + gii * v_[i];
            dq_dth = p[i] - gii * v_[i] * v_[i];
            dq_dv = q[i] / v_[i] - bii * v_[i];
          } else {
            if (yik == cd(0.0, 0.0)) continue;
            const double t = th_[i] - th_[k];
            const double c = std::cos(t), s = std::sin(t);
            const double g = yik.real(), b = yik.imag();
            dp_dth = v_[i] * v_[k] * (g * s - b * c);
            dp_dv = v_[i] * (g * c + b * s);
            dq_dth = -v_[i] * v_[k] * (g * c + b * s);
            dq_dv = v_[i] * (g * s - b * c);
          }
          // Mismatch derivatives are the negated calculated-power derivatives.
          if (th_idx_[k] != kNoIndex) d(ri, static_cast<Eigen::Index>(th_idx_[k])) = -dp_dth;
          if (v_idx_[k] != kNoIndex) d(ri, static_cast<Eigen::Index>(v_idx_[k])) = -dp_dv;
          if (type_[i] == BusType::pq) {
            const auto row = static_cast<Eigen::Index>(nb_ + pq_row(i));
            if (th_idx_[k] != kNoIndex) d(row, static_cast<Eigen::Index>(th_idx_[k])) = -dq_dth;
            if (v_idx_[k] != kNoIndex) d(row, static_cast<Eigen::Index>(v_idx_[k])) = -dq_dv;
          }
        }
      }
      for (const auto& u : units_) {
        if (u.free) d(static_cast<Eigen::Index>(u.bus), static_cast<Eigen::Index>(w_col)) -= u.gain_pu;
      }

      Eigen::PartialPivLU<Eigen::MatrixXd> lu(d);
      Eigen::VectorXd dx = lu.solve(-f);
      if (!dx.allFinite()) break;
      for (Index i = 0; i < nb_; ++i) {
        if (th_idx_[i] != kNoIndex) th_[i] += dx(static_cast<Eigen::Index>(th_idx_[i]));
        if (v_idx_[i] != kNoIndex) v_[i] += dx(static_cast<Eigen::Index>(v_idx_[i]));
      }
      w_ += dx(static_cast<Eigen::Index>(w_col));
    }
    throw SolverError(SolverError::Kind::nonconvergence,
                      fmt::format("power flow did not converge (max mismatch {:.3e} p.u.)", last_mismatch_),
                      last_mismatch_);
  }

  Index pq_row(Index bus) const {
    return static_cast<Index>(std::find(pq_.begin(), pq_.end(), bus) - pq_.begin());
  }

  bool clamp_units() {
    bool changed = false;
    for (auto& u : units_) {
      if (!u.free) continue;
      const auto& gen = net_.generators[u.gen];
      const double out = unit_output(u);
      const double hi = gen.p_max_mw / base_, lo = gen.p_min_mw / base_;
      if (out > hi + 1e-9) {
        u.free = false;
        u.fixed_pu = hi;
        changed = true;
      } else if (out < lo - 1e-9) {
        u.free = false;
        u.fixed_pu = lo;
        changed = true;
      }
    }
    if (changed) {
      // Re-express still-free units around the current operating point so
      // the next Newton pass starts from a consistent w.
      for (auto& u : units_) {
        if (u.free) {
          u.fixed_pu -= u.gain_pu * w_;
        }
      }
      w_base_ += w_;
      w_ = 0.0;
    }
    return changed;
  }

  bool apply_q_limits() {
    std::vector<double> p, q;
    calc(p, q);
    bool changed = false;
    for (Index b = 0; b < nb_; ++b) {
      if (type_[b] != BusType::pv) continue;
      double qmax = 0.0, qmin = 0.0;
      for (const auto& u : units_) {
        if (u.bus != b) continue;
        qmax += net_.generators[u.gen].q_max_mvar / base_;
        qmin += net_.generators[u.gen].q_min_mvar / base_;
      }
      const double qg = q[b] + q_load_[b];
      if (qg > qmax + 1e-9) {
        type_[b] = BusType::pq;
        q_fixed_[b] = qmax;
        changed = true;
      } else if (qg < qmin - 1e-9) {
        type_[b] = BusType::pq;
        q_fixed_[b] = qmin;
        changed = true;
      }
    }
    return changed;
  }

  SolutionState result(int iterations) {
    SolutionState s;
    const auto& buses = ybus_.buses;
    s.nodes = buses.nodes;
    s.v_pu.resize(s.nodes.size());
    s.angle_rad.resize(s.nodes.size());
    for (Index i = 0; i < s.nodes.size(); ++i) {
      s.v_pu[i] = v_[buses.bus_of_node[i]];
      s.angle_rad[i] = th_[buses.bus_of_node[i]];
    }

    std::vector<double> p, q;
    calc(p, q);
    s.max_mismatch_pu = mismatch(p, q).cwiseAbs().maxCoeff();

    // Unit reactive output: bus requirement shared by MVA rating, or each
    // unit at its limit when the bus was switched to PQ.
    std::vector<double> bus_rating(nb_, 0.0);
    for (const auto& u : units_) bus_rating[u.bus] += std::max(net_.generators[u.gen].s_rating_mva, 1e-6);
    for (const auto& u : units_) {
      const auto& gen = net_.generators[u.gen];
      GeneratorResult r;
      r.generator = u.gen;
      r.p_mw = unit_output(u) * base_;
      r.at_p_limit = !u.free;
      const double q_bus = (type_[u.bus] == BusType::pq ? q_fixed_[u.bus] : q[u.bus] + q_load_[u.bus]) * base_;
      r.q_mvar = q_bus * std::max(gen.s_rating_mva, 1e-6) / bus_rating[u.bus];
      r.at_q_limit = type_[u.bus] == BusType::pq;
      s.generators.push_back(r);
    }
    std::sort(s.generators.begin(), s.generators.end(),
              [](const GeneratorResult& a, const GeneratorResult& b) { return a.generator < b.generator; });

    for (Index bi = 0; bi < net_.branches.size(); ++bi) {
      const auto& br = net_.branches[bi];
      if (!is_series_branch(br)) continue;
      Index f = buses.bus_of(br.from_node), t = buses.bus_of(br.to_node);
      if (f == kNoIndex || t == kNoIndex) continue;
      const cd vf = std::polar(v_[f], th_[f]), vt = std::polar(v_[t], th_[t]);
      const cd ys = 1.0 / cd(br.r_pu, br.x_pu), yc(0.0, br.b_pu / 2.0);
      const cd sf = vf * std::conj((vf - vt) * ys + vf * yc) * base_;
      const cd st = vt * std::conj((vt - vf) * ys + vt * yc) * base_;
      BranchResult r;
      r.branch = bi;
      r.p_from_mw = sf.real();
      r.q_from_mvar = sf.imag();
      r.p_to_mw = st.real();
      r.q_to_mvar = st.imag();
      r.loading_pct = br.rating_mva > 0.0 ? 100.0 * std::max(std::abs(sf), std::abs(st)) / br.rating_mva : 0.0;
      s.branches.push_back(r);
    }

    const double w_total = w_base_ + w_;
    s.frequency_hz = opt_.distribute_mismatch ? net_.f0_hz * (1.0 + w_total) : net_.f0_hz;
    s.converged = true;
    s.iterations = iterations;
    s.reference_generator = ref_gen_;
    return s;
  }

  const Network& net_;
  const Island& island_;
  const SolveOptions& opt_;
  AdmittanceMatrix ybus_;
  Index nb_ = 0;
  double base_ = 100.0;
  Index ref_gen_ = kNoIndex;
  Index slack_ = 0;
  std::vector<BusType> type_;
  std::vector<double> vset_, q_fixed_, p_load_, q_load_;
  std::vector<double> v_, th_;
  std::vector<UnitState> units_;
  std::vector<Index> th_idx_, v_idx_, pq_;
  double w_ = 0.0;       // per-unit frequency deviation relative to w_base_
  double w_base_ = 0.0;  // deviation already folded into free units' setpoints
  double last_mismatch_ = 0.0;
};

}  // namespace

SolutionState solve_powerflow(const Network& network, const Island& island, const SolveOptions& options) {
  NewtonSolver solver(network, island, options);
  return solver.solve();
}

// ---------------------------------------------------------------------------

double island_frequency(const Network& network, const Island& island, double delta_p_mw) {
  struct Unit {
    double p_set, p_min, p_max, gain;
    bool free = true;
  };
  std::vector<Unit> units;
  for (Index g : island.generators) {
    const auto& gen = network.generators[g];
    if (gen.online) units.push_back({gen.p_set_mw, gen.p_min_mw, gen.p_max_mw, gen.governor_gain_mw()});
  }

  double w = 0.0;
  for (std::size_t round = 0; round <= units.size(); ++round) {
    double gain = 0.0, saturated = 0.0;
    for (const auto& u : units) {
      if (u.free) {
        gain += u.gain;
      } else {
        saturated += (w < 0.0 ? u.p_max : u.p_min) - u.p_set;
      }
    }
    const double remaining = delta_p_mw - saturated;
    if (gain <= 0.0) {
      if (std::abs(remaining) > 1e-9) {
        throw SolverError(SolverError::Kind::collapse,
                          fmt::format("no responsive governor capacity for {:.3f} MW", remaining));
      }
      break;
    }
    w = -remaining / gain;
    bool clamped = false;
    for (auto& u : units) {
      if (!u.free) continue;
      const double out = u.p_set - u.gain * w;
      if (out > u.p_max + 1e-9 || out < u.p_min - 1e-9) {
        u.free = false;
        clamped = true;
      }
    }
    if (!clamped) break;
  }
  return network.f0_hz * (1.0 + w);
}

std::vector<double> node_injections_mw(const Network& network, const Island& island,
                                       const SolutionState* solution) {
  std::vector<double> inj(network.nodes.size(), 0.0);
  for (Index g : island.generators) {
    const auto& gen = network.generators[g];
    if (!gen.online) continue;
    double p = gen.p_set_mw;
    if (solution) {
      if (const auto* r = solution->generator(g)) p = r->p_mw;
    }
    inj[gen.node] += p;
  }
  for (Index l : island.loads) inj[network.loads[l].node] -= network.loads[l].served_mw;
  return inj;
}

// ---------------------------------------------------------------------------

DcModel::DcModel(const Network& network, const Island& island)
    : buses_(collapse_island(network, island)), base_mva_(network.base_mva) {
  const auto nb = buses_.bus_count();
  Index ref_gen = reference_generator(network, island);
  reference_ = ref_gen == kNoIndex ? 0 : buses_.bus_of(network.generators[ref_gen].node);

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
  for (Index bi = 0; bi < network.branches.size(); ++bi) {
    const auto& br = network.branches[bi];
    if (!is_series_branch(br) || br.x_pu == 0.0) continue;
    Index f = buses_.bus_of(br.from_node), t = buses_.bus_of(br.to_node);
    if (f == kNoIndex || t == kNoIndex) continue;
    lines_.push_back({bi, f, t, br.x_pu});
    if (f == t) continue;
    const double s = 1.0 / br.x_pu;
    const auto fi = static_cast<Eigen::Index>(f), ti = static_cast<Eigen::Index>(t);
    b(fi, fi) += s;
    b(ti, ti) += s;
    b(fi, ti) -= s;
    b(ti, fi) -= s;
  }

  z_ = Eigen::MatrixXd::Zero(b.rows(), b.cols());
  if (nb <= 1) return;
  std::vector<Eigen::Index> keep;
  for (Index i = 0; i < nb; ++i) {
    if (i != reference_) keep.push_back(static_cast<Eigen::Index>(i));
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd reduced(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) reduced(r, c) = b(keep[r], keep[c]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reduced);
  if (!lu.isInvertible()) {
    throw SolverError(SolverError::Kind::singular, "DC susceptance matrix is singular (island not connected)");
  }
  Eigen::MatrixXd inv = lu.inverse();
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) z_(keep[r], keep[c]) = inv(r, c);
  }
}

Eigen::VectorXd DcModel::angles(std::span<const double> inj_mw) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(buses_.bus_count()));
  for (Index i = 0; i < buses_.nodes.size(); ++i) {
    Index node = buses_.nodes[i];
    if (node < inj_mw.size()) p(static_cast<Eigen::Index>(buses_.bus_of_node[i])) += inj_mw[node] / base_mva_;
  }
  return z_ * p;
}

const DcModel::Line& DcModel::line(Index branch) const {
  for (const auto& l : lines_) {
    if (l.branch == branch) return l;
  }
  throw SolverError(SolverError::Kind::topology, "branch is not a closed line of the island");
}

bool DcModel::has_branch(Index branch) const {
  return std::any_of(lines_.begin(), lines_.end(), [&](const Line& l) { return l.branch == branch; });
}

double DcModel::flow_mw(Index branch, const Eigen::VectorXd& theta) const {
  const auto& l = line(branch);
  return (theta(static_cast<Eigen::Index>(l.from_bus)) - theta(static_cast<Eigen::Index>(l.to_bus))) / l.x *
         base_mva_;
}

double DcModel::ptdf(Index monitored, Index bus_i, Index bus_j) const {
  const auto& l = line(monitored);
  const auto f = static_cast<Eigen::Index>(l.from_bus), t = static_cast<Eigen::Index>(l.to_bus);
  const auto i = static_cast<Eigen::Index>(bus_i), j = static_cast<Eigen::Index>(bus_j);
  return ((z_(f, i) - z_(f, j)) - (z_(t, i) - z_(t, j))) / l.x;
}

double DcModel::thevenin_x(Index bus_i, Index bus_j) const {
  const auto i = static_cast<Eigen::Index>(bus_i), j = static_cast<Eigen::Index>(bus_j);
  return z_(i, i) + z_(j, j) - 2.0 * z_(i, j);
}

std::vector<std::pair<Index, double>> dc_flows(const Network& network, const Island& island,
                                               std::span<const double> inj_mw) {
  DcModel model(network, island);
  const Eigen::VectorXd theta = model.angles(inj_mw);
  std::vector<std::pair<Index, double>> out;
  for (Index bi = 0; bi < network.branches.size(); ++bi) {
    if (model.has_branch(bi)) out.emplace_back(bi, model.flow_mw(bi, theta));
  }
  return out;
}

LcdfResult lcdf(const DcModel& model, std::span<const double> inj_mw, Index monitored, Index bus_i,
                Index bus_j, double candidate_x) {
  const Eigen::VectorXd theta = model.angles(inj_mw);
  const double denom = candidate_x + model.thevenin_x(bus_i, bus_j);
  if (!(std::abs(denom) > 1e-12)) {
    throw SolverError(SolverError::Kind::singular, "candidate closure has zero Thevenin reactance");
  }
  LcdfResult r;
  r.monitored_flow_mw = model.flow_mw(monitored, theta);
  const double dtheta = theta(static_cast<Eigen::Index>(bus_i)) - theta(static_cast<Eigen::Index>(bus_j));
  r.candidate_flow_mw = dtheta / denom * model.base_mva();
  r.factor = -model.ptdf(monitored, bus_i, bus_j);
  r.delta_flow_mw = r.factor * r.candidate_flow_mw;
  r.relief_mw = std::abs(r.monitored_flow_mw + r.delta_flow_mw) - std::abs(r.monitored_flow_mw);
  return r;
}

LcdfResult lcdf(const Network& network, const Island& island, Index monitored, Index candidate,
                const SolutionState* solution) {
  const auto& cand = network.branches[candidate];
  if (cand.closed) throw SolverError(SolverError::Kind::topology, fmt::format("candidate '{}' is closed", cand.id));
  DcModel model(network, island);
  Index bi = model.buses().bus_of(cand.from_node);
  Index bj = model.buses().bus_of(cand.to_node);
  if (bi == kNoIndex || bj == kNoIndex) {
    throw SolverError(SolverError::Kind::topology,
                      fmt::format("candidate '{}' has an endpoint outside the energized island", cand.id));
  }
  auto inj = node_injections_mw(network, island, solution);
  return lcdf(model, inj, monitored, bi, bj, cand.x_pu);
}

}  // namespace restore
