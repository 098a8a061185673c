#include "restore/model.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

namespace restore {

void Load::serve(double mw) {
  served_mw = std::clamp(mw, 0.0, p_mw);
  served_mvar = p_mw > 0.0 ? served_mw * q_mvar / p_mw : 0.0;
}

std::string_view to_string(ElementKind kind) {
  switch (kind) {
    case ElementKind::node: return "node";
    case ElementKind::breaker: return "breaker";
    case ElementKind::branch: return "branch";
    case ElementKind::generator: return "generator";
    case ElementKind::load: return "load";
    case ElementKind::shunt: return "shunt";
  }
  return "?";
}

std::optional<ElementKind> element_kind_from_string(std::string_view text) {
  for (auto k : {ElementKind::node, ElementKind::breaker, ElementKind::branch,
                 ElementKind::generator, ElementKind::load, ElementKind::shunt}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

namespace {

template <class T>
void index_ids(std::unordered_map<std::string, Index>& map, const std::vector<T>& items,
               ElementKind kind) {
  map.clear();
  map.reserve(items.size());
  for (Index i = 0; i < items.size(); ++i) {
    if (!map.emplace(items[i].id, i).second) {
      throw ModelError(fmt::format("duplicate {} id '{}'", to_string(kind), items[i].id));
    }
  }
}

void check_node(Index node, std::size_t count, std::string_view what, const std::string& id) {
  if (node >= count) {
    throw ModelError(fmt::format("{} '{}' references a missing node", what, id));
  }
}

}  // namespace

void Network::reindex() {
  index_ids(ids_[0], nodes, ElementKind::node);
  index_ids(ids_[1], breakers, ElementKind::breaker);
  index_ids(ids_[2], branches, ElementKind::branch);
  index_ids(ids_[3], generators, ElementKind::generator);
  index_ids(ids_[4], loads, ElementKind::load);
  index_ids(ids_[5], shunts, ElementKind::shunt);

  const auto n = nodes.size();
  for (const auto& node : nodes) {
    if (!(node.nominal_kv > 0.0)) {
      throw ModelError(fmt::format("node '{}' has non-positive nominal kV", node.id));
    }
  }
  for (const auto& b : breakers) {
    check_node(b.from_node, n, "breaker", b.id);
    check_node(b.to_node, n, "breaker", b.id);
    if (b.from_node == b.to_node) {
      throw ModelError(fmt::format("breaker '{}' connects a node to itself", b.id));
    }
    if (nodes[b.from_node].substation_id != nodes[b.to_node].substation_id) {
      throw ModelError(fmt::format("breaker '{}' spans two substations", b.id));
    }
  }
  for (auto& br : branches) {
    check_node(br.from_node, n, "branch", br.id);
    check_node(br.to_node, n, "branch", br.id);
    br.zero_impedance = br.r_pu == 0.0 && br.x_pu == 0.0;
    if (!br.zero_impedance && !(br.rating_mva > 0.0)) {
      throw ModelError(fmt::format("branch '{}' needs a positive rating", br.id));
    }
  }
  for (const auto& g : generators) check_node(g.node, n, "generator", g.id);
  for (const auto& l : loads) check_node(l.node, n, "load", l.id);
  for (const auto& s : shunts) check_node(s.node, n, "shunt", s.id);

  std::unordered_map<std::string, Index> sub_zone;
  for (Index z = 0; z < zones.size(); ++z) {
    for (const auto& sub : zones[z].substation_ids) {
      if (!sub_zone.emplace(sub, z).second) {
        throw ModelError(fmt::format("substation '{}' belongs to more than one zone", sub));
      }
    }
  }
  node_zone_.assign(n, kNoIndex);
  for (Index i = 0; i < n; ++i) {
    if (auto it = sub_zone.find(nodes[i].substation_id); it != sub_zone.end()) {
      node_zone_[i] = it->second;
    }
  }
  for (Index z = 0; z < zones.size(); ++z) {
    for (const auto& gid : zones[z].bsu_generator_ids) {
      auto g = find(ElementKind::generator, gid);
      if (g == kNoIndex || node_zone_[generators[g].node] != z) {
        throw ModelError(fmt::format("zone '{}' lists blackstart unit '{}' outside the zone",
                                     zones[z].id, gid));
      }
    }
    for (const auto& lid : zones[z].critical_load_ids) {
      auto l = find(ElementKind::load, lid);
      if (l == kNoIndex || node_zone_[loads[l].node] != z) {
        throw ModelError(fmt::format("zone '{}' lists critical load '{}' outside the zone",
                                     zones[z].id, lid));
      }
    }
  }
}

Index Network::find(ElementKind kind, std::string_view id) const {
  const auto& map = ids_[static_cast<int>(kind)];
  auto it = map.find(std::string(id));
  return it == map.end() ? kNoIndex : it->second;
}

Index Network::node_index(std::string_view id) const {
  auto i = find(ElementKind::node, id);
  if (i == kNoIndex) throw ModelError(fmt::format("unknown node '{}'", id));
  return i;
}

Index Network::zone_index(std::string_view id) const {
  for (Index z = 0; z < zones.size(); ++z) {
    if (zones[z].id == id) return z;
  }
  return kNoIndex;
}

bool Network::operator==(const Network& o) const {
  return base_mva == o.base_mva && f0_hz == o.f0_hz && nodes == o.nodes &&
         breakers == o.breakers && branches == o.branches && generators == o.generators &&
         loads == o.loads && shunts == o.shunts && zones == o.zones;
}

// ---------------------------------------------------------------------------

void IslandTracker::rebuild(const Network& network) {
  const auto n = network.nodes.size();
  parent_.resize(n);
  std::iota(parent_.begin(), parent_.end(), Index{0});
  size_.assign(n, 1);
  live_.assign(n, false);
  for (const auto& b : network.breakers) {
    if (b.closed) on_close(b.from_node, b.to_node);
  }
  for (const auto& br : network.branches) {
    if (br.closed) on_close(br.from_node, br.to_node);
  }
  for (const auto& g : network.generators) {
    if (g.online) on_generator_online(g.node);
  }
}

Index IslandTracker::find(Index node) const {
  Index root = node;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[node] != root) {
    Index next = parent_[node];
    parent_[node] = root;
    node = next;
  }
  return root;
}

void IslandTracker::on_close(Index a, Index b) {
  Index ra = find(a);
  Index rb = find(b);
  if (ra == rb) return;
  if (size_[ra] < size_[rb]) std::swap(ra, rb);
  parent_[rb] = ra;
  size_[ra] += size_[rb];
  live_[ra] = live_[ra] || live_[rb];
}

void IslandTracker::on_generator_online(Index node) { live_[find(node)] = true; }

// ---------------------------------------------------------------------------

std::vector<Island> components(const Network& network) {
  IslandTracker uf(network);
  const auto n = network.nodes.size();

  std::vector<Index> slot(n, kNoIndex);
  std::vector<Island> out;
  for (Index i = 0; i < n; ++i) {
    Index root = uf.find(i);
    if (slot[root] == kNoIndex) {
      slot[root] = out.size();
      out.emplace_back();
      out.back().energized = uf.energized(root);
    }
    out[slot[root]].nodes.push_back(i);
  }
  auto owner = [&](Index node) -> Island& { return out[slot[uf.find(node)]]; };
  for (Index i = 0; i < network.breakers.size(); ++i) {
    const auto& b = network.breakers[i];
    if (b.closed) owner(b.from_node).breakers.push_back(i);
  }
  for (Index i = 0; i < network.branches.size(); ++i) {
    const auto& br = network.branches[i];
    if (br.closed) owner(br.from_node).branches.push_back(i);
  }
  for (Index i = 0; i < network.generators.size(); ++i) {
    owner(network.generators[i].node).generators.push_back(i);
  }
  for (Index i = 0; i < network.loads.size(); ++i) {
    owner(network.loads[i].node).loads.push_back(i);
  }
  for (Index i = 0; i < network.shunts.size(); ++i) {
    owner(network.shunts[i].node).shunts.push_back(i);
  }
  return out;
}

std::vector<Island> energized_islands(const Network& network) {
  auto all = components(network);
  std::erase_if(all, [](const Island& island) { return !island.energized; });
  return all;
}

Index island_of(const Network& network, std::string_view node_id) {
  const Index node = network.node_index(node_id);
  const auto all = components(network);
  for (Index c = 0; c < all.size(); ++c) {
    if (std::binary_search(all[c].nodes.begin(), all[c].nodes.end(), node)) return c;
  }
  return kNoIndex;  // unreachable: every node lands in one component
}

std::vector<Index> tie_branches(const Network& network) {
  std::vector<Index> ties;
  for (Index i = 0; i < network.branches.size(); ++i) {
    const auto& br = network.branches[i];
    Index a = network.zone_of_node(br.from_node);
    Index b = network.zone_of_node(br.to_node);
    if (a != kNoIndex && b != kNoIndex && a != b) ties.push_back(i);
  }
  std::sort(ties.begin(), ties.end(), [&](Index a, Index b) {
    return network.branches[a].id < network.branches[b].id;
  });
  return ties;
}

}  // namespace restore
