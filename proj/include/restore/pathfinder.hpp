#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "restore/model.hpp"
#include "restore/plan.hpp"

namespace restore {

/// Edge weight for breakers and zero-impedance links.
inline constexpr double kSwitchWeight = 1e-6;
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct ElementRef {
  ElementKind kind = ElementKind::branch;  // breaker or branch
  Index index = kNoIndex;
  bool operator==(const ElementRef&) const = default;
};

/// Weighted switch graph. Vertices carry string ids for deterministic
/// tie-breaking; in network-built graphs vertex i is network node i.
class CrankingGraph {
 public:
  struct Edge {
    Index to;
    double weight;
    ElementRef element;
  };

  Index add_vertex(std::string id);
  void add_edge(Index a, Index b, double weight, ElementRef element = {});

  [[nodiscard]] std::size_t size() const { return ids_.size(); }
  [[nodiscard]] const std::string& id(Index v) const { return ids_[v]; }
  [[nodiscard]] const std::vector<Edge>& edges(Index v) const { return adj_[v]; }
  /// Rank of the vertex id in lexicographic order.
  [[nodiscard]] Index rank(Index v) const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<Edge>> adj_;
  mutable std::vector<Index> rank_;
};

/// |1/Y_ij| for a series element: |r + jx|, or the switch weight when zero.
double edge_weight(const Branch& branch);

struct GraphScope {
  /// Restrict vertices to one zone (kNoIndex = whole network).
  Index zone = kNoIndex;
  /// Restrict vertices to one substation (empty = any).
  std::string substation;
  /// Use only elements that are already closed.
  bool closed_only = false;
  /// Exclude transmission branches (switching inside substations only).
  bool switches_only = false;
  /// Branch excluded from the graph, e.g. a tie being closed separately.
  Index skip_branch = kNoIndex;
};

/// Available breakers and branches as weighted edges over network nodes.
CrankingGraph build_cranking_graph(const Network& network, const GraphScope& scope = {});

struct CrankingPath {
  std::vector<Index> nodes;            // target first, energized node last
  std::vector<ElementRef> elements;    // elements[k] joins nodes[k] and nodes[k+1]
  double total_cost = 0.0;
};

/// Least-weight path from `target` to the nearest vertex flagged in
/// `energized`. Ties resolve toward the lexicographically smaller vertex id.
/// Returns nullopt when no energized vertex is reachable.
std::optional<CrankingPath> cranking_path(const CrankingGraph& graph, Index target,
                                          const std::vector<bool>& energized);

/// Total cost of the cranking path, kUnreachable when none exists.
double electrical_distance(const CrankingGraph& graph, Index node, const std::vector<bool>& energized);

/// Single-source distances to every vertex.
std::vector<double> distances_from(const CrankingGraph& graph, Index source);

/// Close events for the path's open elements, energized end first. Internal
/// substation links are always closed and produce no event. Throws
/// ModelError when the path uses an unavailable element.
std::vector<Event> expand_to_breakers(const Network& network, const CrankingPath& path);

}  // namespace restore
