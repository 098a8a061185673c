#include "restore/pathfinder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

#include <fmt/format.h>

namespace restore {

Index CrankingGraph::add_vertex(std::string id) {
  ids_.push_back(std::move(id));
  adj_.emplace_back();
  rank_.clear();
  return ids_.size() - 1;
}

void CrankingGraph::add_edge(Index a, Index b, double weight, ElementRef element) {
  adj_[a].push_back({b, weight, element});
  adj_[b].push_back({a, weight, element});
}

Index CrankingGraph::rank(Index v) const {
  if (rank_.size() != ids_.size()) {
    std::vector<Index> order(ids_.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return ids_[a] < ids_[b]; });
    rank_.assign(ids_.size(), 0);
    for (Index r = 0; r < order.size(); ++r) rank_[order[r]] = r;
  }
  return rank_[v];
}

double edge_weight(const Branch& branch) {
  if (branch.zero_impedance) return kSwitchWeight;
  return std::hypot(branch.r_pu, branch.x_pu);
}

CrankingGraph build_cranking_graph(const Network& network, const GraphScope& scope) {
  CrankingGraph g;
  for (const auto& n : network.nodes) g.add_vertex(n.id);

  auto inside = [&](Index node) {
    if (scope.zone != kNoIndex && network.zone_of_node(node) != scope.zone) return false;
    if (!scope.substation.empty() && network.nodes[node].substation_id != scope.substation) return false;
    return true;
  };
  for (Index i = 0; i < network.breakers.size(); ++i) {
    const auto& b = network.breakers[i];
    if (!b.available || (scope.closed_only && !b.closed)) continue;
    if (!inside(b.from_node) || !inside(b.to_node)) continue;
    g.add_edge(b.from_node, b.to_node, kSwitchWeight, {ElementKind::breaker, i});
  }
  for (Index i = 0; i < network.branches.size(); ++i) {
    const auto& br = network.branches[i];
    if (i == scope.skip_branch) continue;
    if (!br.available || (scope.closed_only && !br.closed)) continue;
    if (scope.switches_only && !br.internal) continue;
    if (!inside(br.from_node) || !inside(br.to_node)) continue;
    g.add_edge(br.from_node, br.to_node, edge_weight(br), {ElementKind::branch, i});
  }
  return g;
}

namespace {

struct SearchTree {
  std::vector<double> dist;
  std::vector<Index> pred;
  std::vector<ElementRef> via;
  Index hit = kNoIndex;
};

SearchTree dijkstra(const CrankingGraph& graph, Index source, const std::vector<bool>* stop_at) {
  const auto n = graph.size();
  SearchTree t;
  t.dist.assign(n, kUnreachable);
  t.pred.assign(n, kNoIndex);
  t.via.assign(n, {});
  std::vector<bool> done(n, false);

  using Item = std::tuple<double, Index, Index>;  // dist, rank, vertex
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  t.dist[source] = 0.0;
  pq.emplace(0.0, graph.rank(source), source);
  while (!pq.empty()) {
    auto [d, r, v] = pq.top();
    pq.pop();
    if (done[v]) continue;
    done[v] = true;
    if (stop_at && (*stop_at)[v]) {
      t.hit = v;
      break;
    }
    for (const auto& e : graph.edges(v)) {
      if (done[e.to]) continue;
      const double nd = d + e.weight;
      const bool better = nd < t.dist[e.to] ||
                          (nd == t.dist[e.to] && t.pred[e.to] != kNoIndex && graph.rank(v) < graph.rank(t.pred[e.to]));
      if (better) {
        t.dist[e.to] = nd;
        t.pred[e.to] = v;
        t.via[e.to] = e.element;
        pq.emplace(nd, graph.rank(e.to), e.to);
      }
    }
  }
  return t;
}

}  // namespace

std::optional<CrankingPath> cranking_path(const CrankingGraph& graph, Index target,
                                          const std::vector<bool>& energized) {
  if (target >= graph.size()) throw ModelError("cranking path target out of range");
  auto tree = dijkstra(graph, target, &energized);
  if (tree.hit == kNoIndex) return std::nullopt;

  CrankingPath path;
  path.total_cost = tree.dist[tree.hit];
  for (Index v = tree.hit; v != kNoIndex; v = tree.pred[v]) {
    path.nodes.push_back(v);
    if (tree.pred[v] != kNoIndex) path.elements.push_back(tree.via[v]);
  }
  // Built energized-end first; flip so the target leads.
  std::reverse(path.nodes.begin(), path.nodes.end());
  std::reverse(path.elements.begin(), path.elements.end());
  return path;
}

double electrical_distance(const CrankingGraph& graph, Index node, const std::vector<bool>& energized) {
  auto path = cranking_path(graph, node, energized);
  return path ? path->total_cost : kUnreachable;
}

std::vector<double> distances_from(const CrankingGraph& graph, Index source) {
  return dijkstra(graph, source, nullptr).dist;
}

std::vector<Event> expand_to_breakers(const Network& network, const CrankingPath& path) {
  std::vector<Event> events;
  for (auto it = path.elements.rbegin(); it != path.elements.rend(); ++it) {
    if (it->kind == ElementKind::breaker) {
      const auto& b = network.breakers.at(it->index);
      if (!b.available) throw ModelError(fmt::format("path uses unavailable breaker '{}'", b.id));
      if (!b.closed) events.push_back({0.0, EventKind::close_breaker, b.id, 0, 0, 0, "path"});
    } else {
      const auto& br = network.branches.at(it->index);
      if (!br.available) throw ModelError(fmt::format("path uses unavailable branch '{}'", br.id));
      if (!br.closed) events.push_back({0.0, EventKind::close_branch, br.id, 0, 0, 0, "path"});
    }
  }
  return events;
}

}  // namespace restore
