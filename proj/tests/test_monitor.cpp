#include <doctest.h>

#include "fixtures.hpp"
#include "restore/monitor.hpp"

using namespace restore;
using fixtures::NetBuilder;

namespace {

struct TwoNode {
  Network net;
  Island island;
  Index a = 0, b = 1;

  TwoNode() {
    NetBuilder nb;
    a = nb.node("A");
    b = nb.node("B");
    nb.branch("L", a, b, 0.0, 0.1);
    nb.gen("G", a, 100, 0, 0);
    net = nb.done();
    island = components(net)[0];
  }

  SolutionState state(double va, double vb, double f, double loading = 10.0) const {
    SolutionState s;
    s.nodes = {a, b};
    s.v_pu = {va, vb};
    s.angle_rad = {0.0, 0.0};
    s.frequency_hz = f;
    s.branches = {{0, 0, 0, 0, 0, loading}};
    s.converged = true;
    return s;
  }
};

std::vector<Violation> run_check(const TwoNode& t, const SolutionState& s, const Clock& clock,
                                 SustainedTracker& tracker, double nadir = 1.0) {
  return check(t.net, t.island, s, LimitSet{}, clock, tracker, nadir);
}

bool has(const std::vector<Violation>& vs, ViolationKind kind, Tier tier) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.kind == kind && v.tier == tier; });
}

/// Context plumbing for remedy tests.
struct Harness {
  Network net;
  LimitSet limits;
  MonitorOptions options;
  std::vector<ServedIncrement> served;
  std::set<Index> capped;

  RemedyContext ctx(double now = 0.0, double hold = 10.0) {
    return RemedyContext{net, limits, options, {now, hold}, kNoIndex, kNoIndex, served, capped};
  }
  Island island() const { return energized_islands(net).at(0); }
};

}  // namespace

TEST_CASE("limit set defaults are valid and nested bands are enforced") {
  LimitSet l;
  CHECK(l.valid());
  l.v_sustained_min = 0.7;
  CHECK_FALSE(l.valid());
  l = {};
  l.f_sustained_max = 61.5;
  CHECK_FALSE(l.valid());
  l = {};
  l.v_duration_s = -1;
  CHECK_FALSE(l.valid());
}

TEST_CASE("values on a band edge are breaches") {
  TwoNode t;
  SustainedTracker tr;
  const Clock c{0.0, 10.0};

  CHECK(run_check(t, t.state(1.0, 1.0, 60.0), c, tr).empty());
  CHECK(has(run_check(t, t.state(1.0, 0.95, 60.0), c, tr), ViolationKind::voltage, Tier::sustained));
  CHECK(run_check(t, t.state(1.0, 0.9500001, 60.0), c, tr).empty());
  CHECK(has(run_check(t, t.state(1.0, 1.10, 60.0), c, tr), ViolationKind::voltage, Tier::sustained));
  CHECK(has(run_check(t, t.state(1.0, 0.80, 60.0), c, tr), ViolationKind::voltage, Tier::instant));
  CHECK(has(run_check(t, t.state(2.0, 1.0, 60.0), c, tr), ViolationKind::voltage, Tier::instant));
  CHECK(has(run_check(t, t.state(1.0, 1.0, 59.6), c, tr), ViolationKind::frequency, Tier::sustained));
  CHECK(has(run_check(t, t.state(1.0, 1.0, 60.4), c, tr), ViolationKind::frequency, Tier::sustained));
  CHECK(run_check(t, t.state(1.0, 1.0, 59.61), c, tr).empty());
  CHECK(has(run_check(t, t.state(1.0, 1.0, 59.0), c, tr), ViolationKind::frequency, Tier::instant));
  CHECK(has(run_check(t, t.state(1.0, 1.0, 60.0, 90.0), c, tr), ViolationKind::branch, Tier::instant));
  CHECK(run_check(t, t.state(1.0, 1.0, 60.0, 89.999), c, tr).empty());
}

TEST_CASE("the worst node is reported with its id") {
  TwoNode t;
  SustainedTracker tr;
  const auto vs = run_check(t, t.state(0.7, 0.9, 60.0), {0.0, 0.0}, tr);
  REQUIRE(vs.size() == 1);
  CHECK(vs[0].element == "A");
  CHECK(vs[0].value == 0.7);
}

TEST_CASE("instant frequency is judged on the nadir estimate") {
  CHECK(frequency_nadir(60.0, 59.5, 2.0) == 59.0);
  CHECK(frequency_nadir(60.0, 60.0, 1.5) == 60.0);
  TwoNode t;
  SustainedTracker tr;
  // 59.5 Hz steady state: sustained at factor 1, instant at factor 2.
  auto vs = run_check(t, t.state(1.0, 1.0, 59.5), {0.0, 10.0}, tr, 1.0);
  CHECK(has(vs, ViolationKind::frequency, Tier::sustained));
  CHECK_FALSE(has(vs, ViolationKind::frequency, Tier::instant));
  vs = run_check(t, t.state(1.0, 1.0, 59.5), {0.0, 10.0}, tr, 2.0);
  CHECK(has(vs, ViolationKind::frequency, Tier::instant));
  CHECK(vs.front().value == 59.5);
}

TEST_CASE("sustained breaches accumulate across holds and reset when cleared") {
  TwoNode t;
  SustainedTracker tr;
  const auto low = t.state(1.0, 0.93, 60.0);
  CHECK(run_check(t, low, {0.0, 5.0}, tr).empty());
  auto vs = run_check(t, low, {5.0, 5.0}, tr);
  REQUIRE(vs.size() == 1);
  CHECK(vs[0].tier == Tier::sustained);
  CHECK(vs[0].first_seen_s == 0.0);
  CHECK(vs[0].duration_s == 10.0);

  CHECK(run_check(t, t.state(1.0, 1.0, 60.0), {10.0, 5.0}, tr).empty());
  CHECK(run_check(t, low, {15.0, 5.0}, tr).empty());

  SustainedTracker raw;
  CHECK(raw.observe("k", 2.0, 3.0) == 3.0);
  CHECK(raw.observe("k", 7.0, 3.0) == 8.0);
  raw.retain_only({});
  CHECK(raw.first_seen("k", -1.0) == -1.0);
}

TEST_CASE("summaries total the island and join zone ids") {
  NetBuilder nb;
  Index a = nb.node("A", 115, "SA"), b = nb.node("B", 115, "SB");
  nb.branch("L", a, b, 0.0, 0.1);
  nb.gen("G", a, 100, 0, 30);
  nb.load("D", b, 30, 6);
  nb.net.zones = {{"north", "", {"SA"}, {}, {}}, {"east", "", {"SB"}, {}, {}}};
  auto net = nb.done();
  const auto island = components(net)[0];
  const auto sol = solve_powerflow(net, island);
  const auto s = summarize(net, island, sol);
  CHECK(s.island == "A");
  CHECK(s.zones == "east+north");
  CHECK(s.load_mw == 30.0);
  CHECK(s.load_mvar == doctest::Approx(6.0));
  CHECK(s.gen_mw == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(s.v_max_pu == doctest::Approx(1.0));
  CHECK(s.v_min_pu < 1.0);
  CHECK(s.frequency_hz == doctest::Approx(60.0).epsilon(1e-9));
}

TEST_CASE("shedding unwinds non-critical increments before critical ones") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A");
  nb.gen("G", a, 100, 0, 50);
  Index cl = nb.load("CL", a, 20, 0, 1.0, true);
  Index ncl = nb.load("NCL", a, 30, 3, 1.0);
  h.net = nb.done();
  h.served = {{cl, 10}, {ncl, 30}, {cl, 10}};
  auto ctx = h.ctx();
  const auto island = h.island();

  auto r = shed_newest(ctx, island, "remedy:frequency");
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].element == "NCL");
  CHECK(r.events[0].kind == EventKind::load_shed);
  CHECK(r.events[0].mw == 0.0);
  CHECK(h.net.loads[ncl].served_mw == 0.0);
  CHECK(h.capped.contains(ncl));

  r = shed_newest(ctx, island, "remedy:frequency");
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].element == "CL");
  CHECK(r.events[0].mw == doctest::Approx(10.0));
  CHECK(h.served.size() == 1);

  shed_newest(ctx, island, "x");
  CHECK(shed_newest(ctx, island, "x").exhausted);
}

TEST_CASE("frequency remedy redispatches the nearest unit by the imbalance") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A"), b = nb.node("B");
  nb.branch("L", a, b, 0.0, 0.1);
  Index far = nb.gen("GA", a, 100, 0, 20);
  Index near = nb.gen("GB", b, 100, 0, 20);
  nb.load("D", b, 50, 0);
  h.net = nb.done();
  auto ctx = h.ctx();
  ctx.focus_node = b;
  const auto island = h.island();
  const auto sol = solve_powerflow(h.net, island);
  REQUIRE(sol.frequency_hz < 60.0);
  const Violation v{ViolationKind::frequency, "A", sol.frequency_hz, Tier::sustained, 0, 10, false};
  auto r = remediate_frequency(ctx, island, &sol, v);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::redispatch);
  CHECK(r.events[0].element == "GB");
  CHECK(r.events[0].mw == doctest::Approx(30.0).epsilon(1e-6));
  CHECK(h.net.generators[near].p_set_mw == r.events[0].mw);
  CHECK(h.net.generators[far].p_set_mw == 20.0);

  const auto after = solve_powerflow(h.net, island);
  CHECK(after.frequency_hz == doctest::Approx(60.0).epsilon(1e-8));
}

TEST_CASE("frequency remedy lowers output on overfrequency and sheds when stuck") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A");
  nb.gen("G", a, 100, 10, 40);
  Index d = nb.load("D", a, 30, 0);
  h.net = nb.done();
  h.served = {{d, 30}};
  auto ctx = h.ctx();
  const auto island = h.island();
  auto sol = solve_powerflow(h.net, island);
  REQUIRE(sol.frequency_hz > 60.0);
  auto r = remediate_frequency(ctx, island, &sol, {ViolationKind::frequency, "A", sol.frequency_hz});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].mw == doctest::Approx(30.0).epsilon(1e-6));

  // No solution: treated as underfrequency, falls through to shedding.
  r = remediate_frequency(ctx, island, nullptr, {ViolationKind::frequency, "A", 0.0});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::load_shed);
}

TEST_CASE("voltage remedy steps the setpoint of the nearest unit") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A"), b = nb.node("B");
  nb.branch("L", a, b, 0.02, 0.3);
  nb.gen("G", a, 100, 0, 40, 100, 0.05, 1.0);
  nb.load("D", b, 40, 15);
  h.net = nb.done();
  auto ctx = h.ctx();
  const auto island = h.island();
  const auto sol = solve_powerflow(h.net, island);
  REQUIRE(sol.voltage(b) <= 0.95);
  auto r = remediate_voltage(ctx, island, sol, {ViolationKind::voltage, "B", sol.voltage(b)});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::vref_change);
  CHECK(r.events[0].setpoint_pu == doctest::Approx(1.01));
  CHECK(solve_powerflow(h.net, island).voltage(b) > sol.voltage(b));
}

TEST_CASE("voltage remedy falls back to a shunt and then to rollback") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A"), b = nb.node("B");
  nb.branch("L", a, b, 0.02, 0.3);
  nb.gen("G", a, 100, 0, 40, 100, 0.05, 1.0);
  Index d = nb.load("D", b, 40, 15);
  nb.shunt("SH", b, 15.0);
  h.net = nb.done();
  h.served = {{d, 40}};
  h.options.vref_max_pu = 1.0;
  auto ctx = h.ctx();
  ctx.pending = ServedIncrement{d, 40};
  const auto island = h.island();
  auto sol = solve_powerflow(h.net, island);
  const double v0 = sol.voltage(b);
  REQUIRE(v0 <= 0.95);

  auto r = remediate_voltage(ctx, island, sol, {ViolationKind::voltage, "B", v0});
  CHECK(ctx.ineffective_units.contains(0));
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::shunt_close);
  CHECK(r.events[0].cause == "remedy:voltage");
  CHECK(h.net.shunts[0].closed);
  sol = solve_powerflow(h.net, island);
  CHECK(sol.voltage(b) > 0.95);

  r = remediate_voltage(ctx, island, sol, {ViolationKind::voltage, "B", 0.9});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::load_shed);
  CHECK(r.events[0].mw == 0.0);
  CHECK(h.served.empty());
  CHECK_FALSE(ctx.pending.has_value());
  CHECK(remediate_voltage(ctx, island, sol, {ViolationKind::voltage, "B", 0.9}).exhausted);
}

TEST_CASE("branch remedy closes the parallel line with the most relief") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A"), b = nb.node("B");
  nb.branch("L1", a, b, 0.0, 0.1, 0.0, 80.0);
  nb.branch("L2", a, b, 0.0, 0.1, 0.0, 80.0, false);
  nb.branch("L3", a, b, 0.0, 0.4, 0.0, 80.0, false);
  nb.gen("G", a, 200, 0, 78);
  Index d = nb.load("D", b, 78, 0);
  h.net = nb.done();
  h.served = {{d, 78}};
  auto ctx = h.ctx();
  const auto island = h.island();
  const auto sol = solve_powerflow(h.net, island);
  REQUIRE(sol.branches.size() == 1);
  REQUIRE(sol.branches[0].loading_pct >= 90.0);

  const auto ranked = rank_closure_candidates(h.net, island, sol, 0);
  REQUIRE(ranked.size() == 2);
  CHECK(h.net.branches[ranked[0].branch].id == "L2");
  CHECK(ranked[0].factor.relief_mw < ranked[1].factor.relief_mw);

  auto r = remediate_branch(ctx, island, sol, {ViolationKind::branch, "L1", sol.branches[0].loading_pct});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::close_branch);
  CHECK(r.events[0].element == "L2");
  CHECK(r.events[0].cause == "remedy:branch");
  CHECK(ctx.branch_rounds == 1);
}

TEST_CASE("stabilize clears an underfrequency by redispatch and logs it resolved") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A");
  nb.gen("G", a, 100, 0, 40, 100, 0.05);
  Index d = nb.load("D", a, 55, 0);
  h.net = nb.done();
  h.served = {{d, 55}};
  auto ctx = h.ctx(0.0, 10.0);
  const auto r = stabilize(ctx);
  CHECK(r.ok);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == EventKind::redispatch);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].resolved);
  CHECK(r.violations[0].kind == ViolationKind::frequency);
  REQUIRE(r.islands.size() == 1);
  CHECK(r.islands[0].summary.frequency_hz == doctest::Approx(60.0).epsilon(1e-8));
}

TEST_CASE("stabilize reports an unresolved violation when remedies run out") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A");
  nb.gen("G", a, 40, 0, 40, 40, 0.05);
  nb.load("D", a, 60, 0);
  h.net = nb.done();
  auto ctx = h.ctx();
  const auto r = stabilize(ctx);
  CHECK_FALSE(r.ok);
  CHECK(r.diagnostic.find("unresolved") != std::string::npos);
  REQUIRE_FALSE(r.violations.empty());
  CHECK_FALSE(r.violations[0].resolved);
}

TEST_CASE("stabilize budget caps the number of remedies") {
  Harness h;
  NetBuilder nb;
  Index a = nb.node("A");
  nb.gen("G", a, 100, 0, 10, 100, 0.05);
  Index d = nb.load("D", a, 25, 0);
  h.net = nb.done();
  h.served = {{d, 25}};
  h.options.max_remedies = 0;
  auto ctx = h.ctx();
  const auto r = stabilize(ctx);
  CHECK_FALSE(r.ok);
  CHECK(r.events.empty());
  CHECK(r.diagnostic.find("budget") != std::string::npos);
}
