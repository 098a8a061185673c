#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "restore/caseio.hpp"
#include "restore/sequencer.hpp"

using namespace restore;
using fixtures::NetBuilder;

namespace {

Network dark(const CaseFile& f) { return apply_blackout(expand_node_breaker(f)); }

/// One zone, one bus: a blackstart unit and a single critical load.
CaseFile single_bus(double p_max, double load_mw) {
  CaseFile f;
  f.buses = {{"X", 69.0}};
  f.substations = {{"SX", {"X"}}};
  CaseGenerator g;
  g.id = "G";
  g.bus = "X";
  g.p_max_mw = p_max;
  g.q_max_mvar = p_max;
  g.q_min_mvar = -p_max;
  g.is_blackstart = true;
  g.s_rating_mva = p_max / 0.9;
  g.droop_r_pu = 0.05;
  g.v_setpoint_pu = 1.0;
  f.generators = {g};
  f.loads = {{"CL", "X", load_mw, 0.0, true, true, std::nullopt}};
  f.zones = {{"Z", "", {"SX"}, {"G"}, {"CL"}}};
  return f;
}

Config quiet() {
  Config c;
  c.gen_vref_pu = 1.0;
  return c;
}

}  // namespace

TEST_CASE("criterion 1 picks a generator while headroom is scarce") {
  CHECK(choose_next(1000, 60, true, true, 0.05) == Choice::generator);
  CHECK(choose_next(1000, 40, true, true, 0.05) == Choice::load);
  CHECK(choose_next(1000, 50, true, true, 0.05) == Choice::load);
  CHECK(choose_next(0, 20, true, true, 0.05) == Choice::generator);
  CHECK(choose_next(0, 20, false, true, 0.05) == Choice::load);
  CHECK(choose_next(1000, 60, true, false, 0.05) == Choice::generator);
  CHECK(choose_next(1000, 60, false, false, 0.05) == Choice::done);
}

TEST_CASE("criterion 1 is invariant to a common MW scale") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double h = 500 * u(rng), inc = 40 * u(rng), alpha = u(rng);
    const double k = 0.1 + 10 * u(rng);
    const auto base = choose_next(h, inc, true, true, alpha);
    // Scaling both sides by a power of two keeps the products exact.
    CHECK(choose_next(h * 4, inc * 4, true, true, alpha) == base);
    const bool near_edge = std::abs(alpha * h - inc) < 1e-9 * (1 + inc);
    if (!near_edge) CHECK(choose_next(h * k, inc * k, true, true, alpha) == base);
  }
}

TEST_CASE("generator and load selection follow the configured key") {
  NetBuilder nb;
  Index a = nb.node("A"), b = nb.node("B");
  nb.gen("G2", a, 80, 0, 0);
  nb.gen("G1", b, 80, 0, 0);
  nb.gen("G3", b, 150, 0, 0);
  nb.net.generators[0].startup_time_s = 5;
  nb.net.generators[1].startup_time_s = 9;
  nb.net.generators[2].startup_time_s = 30;
  nb.net.generators[2].crew_time_s = 1;
  nb.load("L1", a, 30, 0, 0.0);
  nb.load("L2", a, 10, 0, 0.0);
  nb.load("L0", a, 10, 0, 0.0);
  auto net = nb.done();
  const std::vector<Index> gens{0, 1, 2}, loads{0, 1, 2};

  CHECK(net.generators[select_generator(net, gens, GenKey::max_mw)].id == "G3");
  CHECK(net.generators[select_generator(net, gens, GenKey::min_mw)].id == "G1");
  CHECK(net.generators[select_generator(net, gens, GenKey::startup_time)].id == "G2");
  CHECK(net.generators[select_generator(net, gens, GenKey::crew_time)].id == "G1");
  const std::vector<double> dist{0.5, 0.2};
  CHECK(net.generators[select_generator(net, gens, GenKey::distance, &dist)].id == "G1");
  CHECK(net.loads[select_load(net, loads, LoadKey::min_mw)].id == "L0");
  CHECK(net.loads[select_load(net, loads, LoadKey::max_mw)].id == "L1");
  CHECK(net.loads[select_load(net, loads, LoadKey::crew_time)].id == "L0");
}

TEST_CASE("a 50 MW load is picked up in 20, 20 and 10 MW slices") {
  Load l;
  l.p_mw = 50;
  std::vector<double> slices;
  while (next_increment_mw(l, 20.0) > 0.0) {
    slices.push_back(next_increment_mw(l, 20.0));
    l.serve(l.served_mw + slices.back());
  }
  CHECK(slices == std::vector<double>{20, 20, 10});
}

TEST_CASE("stopping holds at exactly beta of total demand") {
  NetBuilder nb;
  Index a = nb.node("A");
  nb.load("L1", a, 60, 0, 1.0);
  nb.load("L2", a, 40, 0, 0.5);
  auto net = nb.done();
  CHECK(total_demand_mw(net) == 100.0);
  CHECK(served_mw(net) == 80.0);
  CHECK(stopping_met(net, 0.8));
  CHECK_FALSE(stopping_met(net, 0.81));
}

TEST_CASE("config validation names the offending field") {
  Config c;
  CHECK_NOTHROW(c.validate());
  c.criterion4_beta = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("criterion4_beta"), std::invalid_argument);
  c = {};
  c.load_inc_mw = -1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("load_inc_mw"), std::invalid_argument);
}

TEST_CASE("one blackstart unit restores its critical load in slices") {
  const auto result = run(dark(single_bus(50, 30)), quiet());
  const auto& plan = result.plan;
  CHECK(plan.status == PlanStatus::complete);
  REQUIRE(plan.steps.size() == 3);
  CHECK(plan.steps[0].action == "gen_pickup G");
  CHECK(plan.steps[1].action == "load_pickup CL");
  CHECK(plan.steps[2].action == "load_pickup CL");
  CHECK(plan.steps[0].time_s == 0.0);
  CHECK(plan.steps[1].time_s == 10.0);
  CHECK(plan.steps[2].time_s == 30.0);
  CHECK(plan.statistics.served_mw == doctest::Approx(30.0));
  CHECK(plan.statistics.restored_pct == doctest::Approx(100.0));
  CHECK(result.final_network.loads[0].served_mw == doctest::Approx(30.0));
  const auto& last = plan.steps.back().events.front();
  CHECK(last.kind == EventKind::load_increment);
  CHECK(last.mw == doctest::Approx(30.0));
  // A 20 MW block on an unloaded unit drops frequency past the nadir limit.
  CHECK(plan.steps[1].events.back().kind == EventKind::redispatch);
}

TEST_CASE("demand beyond reach ends partial with a diagnostic") {
  auto f = single_bus(50, 30);
  f.loads.push_back({"NCL", "X", 20.0, 0.0, false, false, std::nullopt});
  Config c = quiet();
  c.criterion4_beta = 1.0;
  const auto plan = run(dark(f), c).plan;
  CHECK(plan.status == PlanStatus::partial);
  CHECK(plan.statistics.restored_pct == doctest::Approx(60.0));
  CHECK_FALSE(plan.diagnostic.empty());
}

TEST_CASE("serial mode never reaches the system stage") {
  Config c;
  c.parallel_subareas = false;
  for (unsigned seed : {1u, 4u, 9u}) {
    const auto plan = run(dark(fixtures::random_case(seed)), c).plan;
    for (const auto& s : plan.steps) {
      CHECK(s.stage != 3);
      CHECK(s.scope == "system");
    }
  }
}

TEST_CASE("worker count does not change the plan") {
  for (unsigned seed : {2u, 3u, 7u}) {
    CAPTURE(seed);
    const auto net = dark(fixtures::random_case(seed, 4));
    Config one, many;
    many.jobs = 4;
    CHECK(export_plan(run(net, one).plan) == export_plan(run(net, many).plan));
  }
}

TEST_CASE("plans keep stage discipline and a monotone timeline") {
  // Tight branch limits force shedding so the shed-order half is exercised.
  int sheds = 0, critical_sheds = 0;
  for (double branch_max : {90.0, 35.0, 25.0}) {
    Config c;
    c.limits.branch_max_pct = branch_max;
    for (unsigned seed = 1; seed <= 40; ++seed) {
      CAPTURE(branch_max);
      CAPTURE(seed);
      const Network start = dark(fixtures::random_case(seed));
      const auto plan = run(start, c).plan;
      for (const auto& p : fixtures::audit_plan(start, plan)) FAIL_CHECK(p);
      CHECK(plan.statistics.duration_s >= (plan.steps.empty() ? 0.0 : plan.steps.back().time_s));
      for (const auto& s : plan.steps) {
        for (const auto& e : s.events) {
          if (e.kind != EventKind::load_shed) continue;
          ++sheds;
          if (start.loads[start.find(ElementKind::load, e.element)].is_critical) ++critical_sheds;
        }
      }
    }
  }
  CHECK(sheds > 20);
  CHECK(critical_sheds > 0);
}
