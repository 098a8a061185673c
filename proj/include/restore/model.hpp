#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace restore {

using Index = std::size_t;
inline constexpr Index kNoIndex = static_cast<Index>(-1);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind { busbar, junction, terminal };

struct Node {
  std::string id;
  std::string substation_id;
  double nominal_kv = 0.0;
  NodeKind kind = NodeKind::busbar;

  bool operator==(const Node&) const = default;
};

struct Breaker {
  std::string id;
  Index from_node = kNoIndex;
  Index to_node = kNoIndex;
  bool closed = false;
  bool available = true;

  bool operator==(const Breaker&) const = default;
};

struct Branch {
  std::string id;
  Index from_node = kNoIndex;
  Index to_node = kNoIndex;
  double r_pu = 0.0;
  double x_pu = 0.0;
  double b_pu = 0.0;  // total line charging
  double rating_mva = 0.0;
  bool closed = false;
  bool available = true;
  bool is_transformer = false;
  bool zero_impedance = false;
  // Substation-internal conductor between a breaker junction and an element
  // terminal. Not a switching device: stays closed through blackout.
  bool internal = false;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  std::string id;
  Index node = kNoIndex;
  double p_max_mw = 0.0;
  double p_min_mw = 0.0;
  double q_max_mvar = 0.0;
  double q_min_mvar = 0.0;
  bool is_blackstart = false;
  double droop_r_pu = 0.05;
  double s_rating_mva = 0.0;
  double v_setpoint_pu = 1.0;
  double startup_time_s = 0.0;
  double crew_time_s = 0.0;
  bool online = false;
  bool available = true;
  bool is_renewable = false;
  double p_set_mw = 0.0;
  double q_mvar = 0.0;

  // Governor gain in MW per per-unit frequency deviation.
  [[nodiscard]] double governor_gain_mw() const { return s_rating_mva / droop_r_pu; }

  bool operator==(const Generator&) const = default;
};

struct Load {
  std::string id;
  Index node = kNoIndex;
  double p_mw = 0.0;
  double q_mvar = 0.0;
  bool is_critical = false;
  bool available = true;
  double crew_time_s = 0.0;
  double served_mw = 0.0;
  double served_mvar = 0.0;

  // Sets the served share while holding the load's power factor.
  void serve(double mw);

  bool operator==(const Load&) const = default;
};

struct Shunt {
  std::string id;
  Index node = kNoIndex;
  double mvar_nominal = 0.0;  // at 1.0 p.u. voltage, capacitive positive
  bool closed = false;
  bool available = true;
  bool discrete = true;

  bool operator==(const Shunt&) const = default;
};

struct Zone {
  std::string id;
  std::string name;
  std::vector<std::string> substation_ids;
  std::vector<std::string> bsu_generator_ids;
  std::vector<std::string> critical_load_ids;

  bool operator==(const Zone&) const = default;
};

enum class ElementKind { node, breaker, branch, generator, load, shunt };

std::string_view to_string(ElementKind kind);
std::optional<ElementKind> element_kind_from_string(std::string_view text);

/// Node-breaker grid model. Elements reference nodes by index; id lookups go
/// through the per-kind maps rebuilt by `reindex()`.
class Network {
 public:
  double base_mva = 100.0;
  double f0_hz = 60.0;

  std::vector<Node> nodes;
  std::vector<Breaker> breakers;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Shunt> shunts;
  std::vector<Zone> zones;

  /// Rebuilds id maps and zone membership, then checks referential integrity.
  /// Throws ModelError on duplicate ids or dangling references.
  void reindex();

  [[nodiscard]] Index find(ElementKind kind, std::string_view id) const;
  [[nodiscard]] Index node_index(std::string_view id) const;  // throws on unknown id
  [[nodiscard]] Index zone_index(std::string_view id) const;

  /// Zone index owning the node's substation, kNoIndex when unzoned.
  [[nodiscard]] Index zone_of_node(Index node) const { return node_zone_[node]; }

  bool operator==(const Network& other) const;

 private:
  std::unordered_map<std::string, Index> ids_[6];
  std::vector<Index> node_zone_;
};

/// Maximal connected component over closed breakers and closed branches.
struct Island {
  std::vector<Index> nodes;
  std::vector<Index> breakers;
  std::vector<Index> branches;
  std::vector<Index> generators;
  std::vector<Index> loads;
  std::vector<Index> shunts;
  bool energized = false;
};

/// Every connected component, ordered by smallest node index.
std::vector<Island> components(const Network& network);

/// Components holding at least one online generator.
std::vector<Island> energized_islands(const Network& network);

/// Component id (position in `components()`) of the named node.
Index island_of(const Network& network, std::string_view node_id);

/// Branches whose endpoints lie in different zones, ascending by id.
std::vector<Index> tie_branches(const Network& network);

/// Union-find over the switch graph. Closures merge sets in place; any
/// opening requires `rebuild`.
class IslandTracker {
 public:
  explicit IslandTracker(const Network& network) { rebuild(network); }

  void rebuild(const Network& network);
  void on_close(Index a, Index b);
  void on_generator_online(Index node);

  [[nodiscard]] Index find(Index node) const;
  [[nodiscard]] bool energized(Index node) const { return live_[find(node)]; }
  [[nodiscard]] bool same(Index a, Index b) const { return find(a) == find(b); }

 private:
  mutable std::vector<Index> parent_;
  std::vector<Index> size_;
  std::vector<bool> live_;
};

}  // namespace restore
