#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "restore/pathfinder.hpp"

using namespace restore;
using fixtures::NetBuilder;

TEST_CASE("cranking path cost equals exhaustive search on small graphs") {
  std::mt19937 rng(3);
  int reachable = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    CrankingGraph g;
    for (int i = 0; i < n; ++i) g.add_vertex(fmt::format("V{}", i));
    std::vector<fixtures::WeightedEdge> edges;
    const int m = static_cast<int>(rng() % (2 * n + 1));
    for (int e = 0; e < m; ++e) {
      const Index a = rng() % n, b = rng() % n;
      if (a == b) continue;
      // Small integer weights make equal-cost alternatives common.
      const double w = 1.0 + static_cast<double>(rng() % 4);
      g.add_edge(a, b, w);
      edges.push_back({a, b, w});
    }
    std::vector<bool> live(n, false);
    for (int i = 0; i < n; ++i) live[i] = rng() % 4 == 0;
    const Index target = rng() % n;
    CAPTURE(trial);

    const double expected = fixtures::brute_force_cost(n, edges, target, live);
    const auto path = cranking_path(g, target, live);
    if (std::isinf(expected)) {
      CHECK_FALSE(path.has_value());
      CHECK(electrical_distance(g, target, live) == kUnreachable);
      continue;
    }
    ++reachable;
    REQUIRE(path.has_value());
    CHECK(path->total_cost == doctest::Approx(expected).epsilon(1e-12));
    CHECK(path->nodes.front() == target);
    CHECK(live[path->nodes.back()]);
    REQUIRE(path->elements.size() + 1 == path->nodes.size());
    double walked = 0.0;
    for (std::size_t k = 0; k + 1 < path->nodes.size(); ++k) {
      double best = kUnreachable;
      for (const auto& e : g.edges(path->nodes[k])) {
        if (e.to == path->nodes[k + 1]) best = std::min(best, e.weight);
      }
      REQUIRE(best != kUnreachable);
      walked += best;
    }
    CHECK(walked == doctest::Approx(path->total_cost));
  }
  CHECK(reachable > 30);
}

TEST_CASE("equal-cost energized vertices resolve to the smaller id") {
  CrankingGraph g;
  Index t = g.add_vertex("T");
  Index b = g.add_vertex("Eb");
  Index a = g.add_vertex("Ea");
  g.add_edge(t, b, 1.0);
  g.add_edge(t, a, 1.0);
  std::vector<bool> live{false, true, true};
  const auto path = cranking_path(g, t, live);
  REQUIRE(path);
  CHECK(g.id(path->nodes.back()) == "Ea");
}

TEST_CASE("equal-cost routes resolve through the smaller intermediate id") {
  CrankingGraph g;
  Index t = g.add_vertex("T");
  Index m2 = g.add_vertex("M2");
  Index m1 = g.add_vertex("M1");
  Index e = g.add_vertex("E");
  g.add_edge(t, m2, 1.0);
  g.add_edge(t, m1, 1.0);
  g.add_edge(m2, e, 1.0);
  g.add_edge(m1, e, 1.0);
  const auto path = cranking_path(g, t, {false, false, false, true});
  REQUIRE(path);
  REQUIRE(path->nodes.size() == 3);
  CHECK(g.id(path->nodes[1]) == "M1");
}

TEST_CASE("edge weights use the impedance magnitude") {
  Branch br;
  br.r_pu = 0.03;
  br.x_pu = 0.04;
  CHECK(edge_weight(br) == doctest::Approx(0.05));
  br.zero_impedance = true;
  CHECK(edge_weight(br) == kSwitchWeight);
}

TEST_CASE("graph scope filters zones, switches and closed elements") {
  NetBuilder nb;
  Index a = nb.node("A", 115, "S1"), a2 = nb.node("A2", 115, "S1"), b = nb.node("B", 115, "S2");
  nb.breaker("CB", a, a2, false);
  nb.branch("L", a2, b, 0.01, 0.1, 0.0, 100.0, false);
  nb.net.zones = {{"Z1", "", {"S1"}, {}, {}}, {"Z2", "", {"S2"}, {}, {}}};
  auto net = nb.done();

  auto count_edges = [](const CrankingGraph& g) {
    std::size_t n = 0;
    for (Index v = 0; v < g.size(); ++v) n += g.edges(v).size();
    return n / 2;
  };
  CHECK(count_edges(build_cranking_graph(net)) == 2);
  CHECK(count_edges(build_cranking_graph(net, {.zone = 0})) == 1);
  CHECK(count_edges(build_cranking_graph(net, {.closed_only = true})) == 0);
  CHECK(count_edges(build_cranking_graph(net, {.switches_only = true})) == 1);
  CHECK(count_edges(build_cranking_graph(net, {.skip_branch = 0})) == 1);
  net.breakers[0].available = false;
  CHECK(count_edges(build_cranking_graph(net)) == 1);
}

TEST_CASE("path expansion closes open elements from the energized end") {
  NetBuilder nb;
  Index t = nb.node("T", 115, "S1"), j = nb.node("J", 115, "S1"), k = nb.node("K", 115, "S2"),
        e = nb.node("E", 115, "S2");
  nb.breaker("CB1", t, j, false);
  nb.branch("L", j, k, 0.01, 0.1, 0.0, 100.0, false);
  nb.breaker("CB2", k, e, true);
  nb.gen("G", e, 10, 0, 0);
  auto net = nb.done();
  const auto g = build_cranking_graph(net);
  std::vector<bool> live{false, false, false, true};
  const auto path = cranking_path(g, t, live);
  REQUIRE(path);
  CHECK(path->total_cost == doctest::Approx(2 * kSwitchWeight + std::hypot(0.01, 0.1)));
  const auto events = expand_to_breakers(net, *path);
  REQUIRE(events.size() == 2);
  CHECK(events[0].element == "L");
  CHECK(events[0].kind == EventKind::close_branch);
  CHECK(events[1].element == "CB1");
  CHECK(events[1].kind == EventKind::close_breaker);
  for (const auto& ev : events) CHECK(ev.cause == "path");

  net.branches[0].available = false;
  CHECK_THROWS_AS(expand_to_breakers(net, *path), ModelError);
}

TEST_CASE("distances from a source cover the reachable graph") {
  CrankingGraph g;
  for (auto id : {"A", "B", "C", "D"}) g.add_vertex(id);
  g.add_edge(0, 1, 0.5);
  g.add_edge(1, 2, 0.25);
  g.add_edge(0, 2, 1.0);
  const auto d = distances_from(g, 0);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 0.5);
  CHECK(d[2] == 0.75);
  CHECK(d[3] == kUnreachable);
}
