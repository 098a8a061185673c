#include "restore/caseio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

namespace restore {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Field access with path-qualified diagnostics.

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw CaseError(fmt::format("{}: expected an object", path_));
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

  [[nodiscard]] std::string str(const char* key) const {
    const auto& v = at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw CaseError(fmt::format("{}.{}: expected a string", path_, key));
  }
  [[nodiscard]] std::string str(const char* key, std::string fallback) const {
    return has(key) ? str(key) : fallback;
  }

  [[nodiscard]] double num(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw CaseError(fmt::format("{}.{}: expected a number", path_, key));
    double d = v.get<double>();
    if (!std::isfinite(d)) throw CaseError(fmt::format("{}.{}: not finite", path_, key));
    return d;
  }
  [[nodiscard]] double num(const char* key, double fallback) const {
    return has(key) ? num(key) : fallback;
  }
  [[nodiscard]] std::optional<double> opt_num(const char* key) const {
    return has(key) ? std::optional<double>(num(key)) : std::nullopt;
  }

  [[nodiscard]] bool flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_boolean()) throw CaseError(fmt::format("{}.{}: expected true/false", path_, key));
    return v.get<bool>();
  }

  [[nodiscard]] std::vector<std::string> strings(const char* key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    const auto& v = at(key);
    if (!v.is_array()) throw CaseError(fmt::format("{}.{}: expected an array", path_, key));
    for (const auto& item : v) {
      if (item.is_string()) {
        out.push_back(item.get<std::string>());
      } else if (item.is_number_integer()) {
        out.push_back(std::to_string(item.get<long long>()));
      } else {
        throw CaseError(fmt::format("{}.{}: expected strings", path_, key));
      }
    }
    return out;
  }

  template <class F>
  void each(const char* key, F&& f) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) throw CaseError(fmt::format("{}.{}: expected an array", path_, key));
    for (std::size_t i = 0; i < v.size(); ++i) {
      f(Reader(v[i], fmt::format("{}[{}]", key, i)));
    }
  }

  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  const json& at(const char* key) const {
    auto it = j_.find(key);
    if (it == j_.end()) throw CaseError(fmt::format("{}: missing field '{}'", path_, key));
    return *it;
  }

  const json& j_;
  std::string path_;
};

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw CaseError(fmt::format("{}: syntax error at byte {}: {}", what, e.byte, e.what()));
  }
}

template <class T>
void require_unique(const std::vector<T>& items, std::string_view section) {
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    if (!seen.insert(item.id).second) {
      throw CaseError(fmt::format("{}: duplicate id '{}'", section, item.id));
    }
  }
}

NodeKind node_kind_from(const std::string& s, const std::string& path) {
  if (s == "busbar") return NodeKind::busbar;
  if (s == "junction") return NodeKind::junction;
  if (s == "terminal") return NodeKind::terminal;
  throw CaseError(fmt::format("{}: unknown node kind '{}'", path, s));
}

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::busbar: return "busbar";
    case NodeKind::junction: return "junction";
    case NodeKind::terminal: return "terminal";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Node-breaker documents.

Network parse_node_breaker(const Reader& root, double base_mva, double f0) {
  Network net;
  net.base_mva = base_mva;
  net.f0_hz = f0;

  std::unordered_map<std::string, Index> node_ids;
  root.each("nodes", [&](const Reader& r) {
    Node n;
    n.id = r.str("id");
    n.substation_id = r.str("substation");
    n.nominal_kv = r.num("nominal_kv");
    n.kind = node_kind_from(r.str("kind", "busbar"), r.path());
    if (!node_ids.emplace(n.id, net.nodes.size()).second) {
      throw CaseError(fmt::format("nodes: duplicate id '{}'", n.id));
    }
    net.nodes.push_back(std::move(n));
  });
  auto node_ref = [&](const Reader& r, const char* key) {
    auto id = r.str(key);
    auto it = node_ids.find(id);
    if (it == node_ids.end()) {
      throw CaseError(fmt::format("{}.{}: dangling reference to node '{}'", r.path(), key, id));
    }
    return it->second;
  };

  root.each("breakers", [&](const Reader& r) {
    Breaker b;
    b.id = r.str("id");
    b.from_node = node_ref(r, "from");
    b.to_node = node_ref(r, "to");
    b.closed = r.flag("closed", false);
    b.available = r.flag("available", true);
    net.breakers.push_back(std::move(b));
  });
  root.each("branches", [&](const Reader& r) {
    Branch br;
    br.id = r.str("id");
    br.from_node = node_ref(r, "from");
    br.to_node = node_ref(r, "to");
    br.r_pu = r.num("r_pu", 0.0);
    br.x_pu = r.num("x_pu", 0.0);
    br.b_pu = r.num("b_pu", 0.0);
    br.rating_mva = r.num("rating_mva", 0.0);
    br.closed = r.flag("closed", false);
    br.available = r.flag("available", true);
    br.is_transformer = r.flag("is_transformer", false);
    br.internal = r.flag("internal", false);
    br.zero_impedance = br.r_pu == 0.0 && br.x_pu == 0.0;
    net.branches.push_back(std::move(br));
  });
  root.each("generators", [&](const Reader& r) {
    Generator g;
    g.id = r.str("id");
    g.node = node_ref(r, "node");
    g.p_max_mw = r.num("p_max_mw");
    g.p_min_mw = r.num("p_min_mw", 0.0);
    g.q_max_mvar = r.num("q_max_mvar", 0.0);
    g.q_min_mvar = r.num("q_min_mvar", 0.0);
    g.is_blackstart = r.flag("is_blackstart", false);
    g.droop_r_pu = r.num("droop_r_pu", 0.05);
    g.s_rating_mva = r.num("s_rating_mva", g.p_max_mw);
    g.v_setpoint_pu = r.num("v_setpoint_pu", 1.0);
    g.startup_time_s = r.num("startup_time_s", 0.0);
    g.crew_time_s = r.num("crew_time_s", 0.0);
    g.online = r.flag("online", false);
    g.available = r.flag("available", true);
    g.is_renewable = r.flag("is_renewable", false);
    g.p_set_mw = r.num("p_set_mw", 0.0);
    g.q_mvar = r.num("q_mvar", 0.0);
    net.generators.push_back(std::move(g));
  });
  root.each("loads", [&](const Reader& r) {
    Load l;
    l.id = r.str("id");
    l.node = node_ref(r, "node");
    l.p_mw = r.num("p_mw");
    l.q_mvar = r.num("q_mvar", 0.0);
    l.is_critical = r.flag("is_critical", false);
    l.available = r.flag("available", true);
    l.crew_time_s = r.num("crew_time_s", 0.0);
    l.served_mw = r.num("served_mw", 0.0);
    l.served_mvar = r.num("served_mvar", 0.0);
    net.loads.push_back(std::move(l));
  });
  root.each("shunts", [&](const Reader& r) {
    Shunt s;
    s.id = r.str("id");
    s.node = node_ref(r, "node");
    s.mvar_nominal = r.num("mvar_nominal");
    s.closed = r.flag("closed", false);
    s.available = r.flag("available", true);
    s.discrete = r.flag("discrete", true);
    net.shunts.push_back(std::move(s));
  });
  root.each("zones", [&](const Reader& r) {
    Zone z;
    z.id = r.str("id");
    z.name = r.str("name", z.id);
    z.substation_ids = r.strings("substations");
    z.bsu_generator_ids = r.strings("blackstart_generators");
    z.critical_load_ids = r.strings("critical_loads");
    net.zones.push_back(std::move(z));
  });
  try {
    net.reindex();
  } catch (const ModelError& e) {
    throw CaseError(e.what());
  }
  return net;
}

// ---------------------------------------------------------------------------
// Bus-branch documents.

void validate_bus_branch(const CaseFile& f) {
  require_unique(f.buses, "buses");
  require_unique(f.branches, "branches");
  require_unique(f.generators, "generators");
  require_unique(f.loads, "loads");
  require_unique(f.shunts, "shunts");
  require_unique(f.substations, "substations");
  require_unique(f.zones, "zones");

  std::unordered_set<std::string> buses;
  for (const auto& b : f.buses) {
    if (!(b.nominal_kv > 0.0)) {
      throw CaseError(fmt::format("buses: '{}' has non-positive nominal_kv", b.id));
    }
    buses.insert(b.id);
  }
  auto bus_ref = [&](std::string_view section, const std::string& id, const std::string& bus) {
    if (!buses.contains(bus)) {
      throw CaseError(fmt::format("{}: '{}' has a dangling reference to bus '{}'", section, id, bus));
    }
  };
  for (const auto& br : f.branches) {
    bus_ref("branches", br.id, br.from_bus);
    bus_ref("branches", br.id, br.to_bus);
    if (br.from_bus == br.to_bus) {
      throw CaseError(fmt::format("branches: '{}' connects bus '{}' to itself", br.id, br.from_bus));
    }
    bool zero = br.r_pu == 0.0 && br.x_pu == 0.0;
    if (!zero && !(br.rating_mva > 0.0)) {
      throw CaseError(fmt::format("branches: '{}' needs a positive rating_mva", br.id));
    }
  }
  for (const auto& g : f.generators) {
    bus_ref("generators", g.id, g.bus);
    if (g.p_min_mw > g.p_max_mw) {
      throw CaseError(fmt::format("generators: '{}' has p_min_mw above p_max_mw", g.id));
    }
    if (g.droop_r_pu && !(*g.droop_r_pu > 0.0)) {
      throw CaseError(fmt::format("generators: '{}' needs a positive droop_r_pu", g.id));
    }
  }
  for (const auto& l : f.loads) bus_ref("loads", l.id, l.bus);
  for (const auto& s : f.shunts) bus_ref("shunts", s.id, s.bus);

  std::unordered_set<std::string> subs;
  std::unordered_map<std::string, std::string> bus_sub;
  for (const auto& s : f.substations) {
    subs.insert(s.id);
    for (const auto& b : s.buses) {
      bus_ref("substations", s.id, b);
      if (!bus_sub.emplace(b, s.id).second) {
        throw CaseError(fmt::format("substations: bus '{}' listed in two substations", b));
      }
    }
  }
  for (const auto& b : f.buses) {
    if (!bus_sub.contains(b.id)) subs.insert(b.id);  // implicit one-bus substation
  }

  std::unordered_set<std::string> gen_ids, load_ids;
  for (const auto& g : f.generators) gen_ids.insert(g.id);
  for (const auto& l : f.loads) load_ids.insert(l.id);
  std::unordered_set<std::string> zoned;
  for (const auto& z : f.zones) {
    for (const auto& s : z.substations) {
      if (!subs.contains(s)) {
        throw CaseError(fmt::format("zones: '{}' has a dangling reference to substation '{}'", z.id, s));
      }
      if (!zoned.insert(s).second) {
        throw CaseError(fmt::format("zones: substation '{}' belongs to two zones", s));
      }
    }
    for (const auto& g : z.blackstart_generators) {
      if (!gen_ids.contains(g)) {
        throw CaseError(fmt::format("zones: '{}' has a dangling reference to generator '{}'", z.id, g));
      }
    }
    for (const auto& l : z.critical_loads) {
      if (!load_ids.contains(l)) {
        throw CaseError(fmt::format("zones: '{}' has a dangling reference to load '{}'", z.id, l));
      }
    }
  }
}

CaseFile parse_bus_branch(const Reader& root, CaseFile f) {
  root.each("buses", [&](const Reader& r) {
    f.buses.push_back({r.str("id"), r.num("nominal_kv")});
  });
  root.each("branches", [&](const Reader& r) {
    CaseBranch br;
    br.id = r.str("id");
    br.from_bus = r.str("from");
    br.to_bus = r.str("to");
    br.r_pu = r.num("r_pu", 0.0);
    br.x_pu = r.num("x_pu", 0.0);
    br.b_pu = r.num("b_pu", 0.0);
    br.rating_mva = r.num("rating_mva", 0.0);
    br.is_transformer = r.flag("is_transformer", false);
    br.available = r.flag("available", true);
    f.branches.push_back(std::move(br));
  });
  root.each("generators", [&](const Reader& r) {
    CaseGenerator g;
    g.id = r.str("id");
    g.bus = r.str("bus");
    g.p_max_mw = r.num("p_max_mw");
    g.p_min_mw = r.num("p_min_mw", 0.0);
    g.q_max_mvar = r.num("q_max_mvar", 0.0);
    g.q_min_mvar = r.num("q_min_mvar", 0.0);
    g.is_blackstart = r.flag("is_blackstart", false);
    g.droop_r_pu = r.opt_num("droop_r_pu");
    g.s_rating_mva = r.opt_num("s_rating_mva");
    g.v_setpoint_pu = r.num("v_setpoint_pu", 1.0);
    g.startup_time_s = r.opt_num("startup_time_s");
    g.crew_time_s = r.opt_num("crew_time_s");
    g.is_renewable = r.flag("is_renewable", false);
    g.available = r.flag("available", true);
    g.p_mw = r.num("p_mw", 0.0);
    g.q_mvar = r.num("q_mvar", 0.0);
    f.generators.push_back(std::move(g));
  });
  root.each("loads", [&](const Reader& r) {
    CaseLoad l;
    l.id = r.str("id");
    l.bus = r.str("bus");
    l.p_mw = r.num("p_mw");
    l.q_mvar = r.num("q_mvar", 0.0);
    l.is_critical = r.flag("is_critical", false);
    l.available = r.flag("available", true);
    l.crew_time_s = r.opt_num("crew_time_s");
    f.loads.push_back(std::move(l));
  });
  root.each("shunts", [&](const Reader& r) {
    CaseShunt s;
    s.id = r.str("id");
    s.bus = r.str("bus");
    s.mvar_nominal = r.num("mvar_nominal");
    s.discrete = r.flag("discrete", true);
    s.available = r.flag("available", true);
    f.shunts.push_back(std::move(s));
  });
  root.each("substations", [&](const Reader& r) {
    f.substations.push_back({r.str("id"), r.strings("buses")});
  });
  root.each("zones", [&](const Reader& r) {
    CaseZone z;
    z.id = r.str("id");
    z.name = r.str("name", z.id);
    z.substations = r.strings("substations");
    z.blackstart_generators = r.strings("blackstart_generators");
    z.critical_loads = r.strings("critical_loads");
    f.zones.push_back(std::move(z));
  });
  validate_bus_branch(f);
  return f;
}

// ---------------------------------------------------------------------------
// Serialization helpers.

void put_opt(ojson& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

ojson zone_json(const std::string& id, const std::string& name, const std::vector<std::string>& subs,
                const std::vector<std::string>& bsu, const std::vector<std::string>& cl) {
  ojson z;
  z["id"] = id;
  z["name"] = name;
  z["substations"] = subs;
  z["blackstart_generators"] = bsu;
  z["critical_loads"] = cl;
  return z;
}

ojson network_json(const Network& net) {
  ojson root;
  root["format_version"] = kCaseFormatVersion;
  root["layout"] = "node-breaker";
  root["base_mva"] = net.base_mva;
  root["frequency_hz"] = net.f0_hz;
  auto& nodes = root["nodes"] = ojson::array();
  for (const auto& n : net.nodes) {
    nodes.push_back({{"id", n.id},
                     {"substation", n.substation_id},
                     {"nominal_kv", n.nominal_kv},
                     {"kind", node_kind_name(n.kind)}});
  }
  auto& breakers = root["breakers"] = ojson::array();
  for (const auto& b : net.breakers) {
    breakers.push_back({{"id", b.id},
                        {"from", net.nodes[b.from_node].id},
                        {"to", net.nodes[b.to_node].id},
                        {"closed", b.closed},
                        {"available", b.available}});
  }
  auto& branches = root["branches"] = ojson::array();
  for (const auto& br : net.branches) {
    branches.push_back({{"id", br.id},
                        {"from", net.nodes[br.from_node].id},
                        {"to", net.nodes[br.to_node].id},
                        {"r_pu", br.r_pu},
                        {"x_pu", br.x_pu},
                        {"b_pu", br.b_pu},
                        {"rating_mva", br.rating_mva},
                        {"closed", br.closed},
                        {"available", br.available},
                        {"is_transformer", br.is_transformer},
                        {"internal", br.internal}});
  }
  auto& gens = root["generators"] = ojson::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"id", g.id},
                    {"node", net.nodes[g.node].id},
                    {"p_max_mw", g.p_max_mw},
                    {"p_min_mw", g.p_min_mw},
                    {"q_max_mvar", g.q_max_mvar},
                    {"q_min_mvar", g.q_min_mvar},
                    {"is_blackstart", g.is_blackstart},
                    {"droop_r_pu", g.droop_r_pu},
                    {"s_rating_mva", g.s_rating_mva},
                    {"v_setpoint_pu", g.v_setpoint_pu},
                    {"startup_time_s", g.startup_time_s},
                    {"crew_time_s", g.crew_time_s},
                    {"online", g.online},
                    {"available", g.available},
                    {"is_renewable", g.is_renewable},
                    {"p_set_mw", g.p_set_mw},
                    {"q_mvar", g.q_mvar}});
  }
  auto& loads = root["loads"] = ojson::array();
  for (const auto& l : net.loads) {
    loads.push_back({{"id", l.id},
                     {"node", net.nodes[l.node].id},
                     {"p_mw", l.p_mw},
                     {"q_mvar", l.q_mvar},
                     {"is_critical", l.is_critical},
                     {"available", l.available},
                     {"crew_time_s", l.crew_time_s},
                     {"served_mw", l.served_mw},
                     {"served_mvar", l.served_mvar}});
  }
  auto& shunts = root["shunts"] = ojson::array();
  for (const auto& s : net.shunts) {
    shunts.push_back({{"id", s.id},
                      {"node", net.nodes[s.node].id},
                      {"mvar_nominal", s.mvar_nominal},
                      {"closed", s.closed},
                      {"available", s.available},
                      {"discrete", s.discrete}});
  }
  auto& zones = root["zones"] = ojson::array();
  for (const auto& z : net.zones) {
    zones.push_back(zone_json(z.id, z.name, z.substation_ids, z.bsu_generator_ids, z.critical_load_ids));
  }
  return root;
}

// ---------------------------------------------------------------------------
// Expansion.

struct Attachment {
  ElementKind kind;
  Index element;   // index into the case section
  bool from_end;   // branches only
  std::string label;
};

class Expander {
 public:
  explicit Expander(Network& net) : net_(net) {}

  Index add_node(std::string id, const std::string& sub, double kv, NodeKind kind) {
    net_.nodes.push_back({std::move(id), sub, kv, kind});
    return net_.nodes.size() - 1;
  }

  void add_breaker(const std::string& bus, Index a, Index b) {
    Breaker br;
    br.id = fmt::format("{}.CB{}", bus, ++breaker_seq_);
    br.from_node = a;
    br.to_node = b;
    br.closed = true;
    net_.breakers.push_back(std::move(br));
  }

  Index add_terminal(const std::string& bus, const std::string& sub, double kv, Index junction,
                     std::size_t k) {
    Index t = add_node(fmt::format("{}.T{}", bus, k), sub, kv, NodeKind::terminal);
    Branch link;
    link.id = fmt::format("{}.Z{}", bus, k);
    link.from_node = junction;
    link.to_node = t;
    link.closed = true;
    link.zero_impedance = true;
    link.internal = true;
    net_.branches.push_back(std::move(link));
    return t;
  }

  void reset_breakers() { breaker_seq_ = 0; }

 private:
  Network& net_;
  std::size_t breaker_seq_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

CaseFile parse_case(std::string_view text) {
  json j = parse_json(text, "case");
  Reader root(j, "case");
  CaseFile f;
  f.format_version = static_cast<int>(root.num("format_version", kCaseFormatVersion));
  if (f.format_version != kCaseFormatVersion) {
    throw CaseError(fmt::format("case: unsupported format_version {}", f.format_version));
  }
  f.base_mva = root.num("base_mva");
  if (!(f.base_mva > 0.0)) throw CaseError("case: base_mva must be positive");
  f.frequency_hz = root.num("frequency_hz", 60.0);
  if (!(f.frequency_hz > 0.0)) throw CaseError("case: frequency_hz must be positive");

  const auto layout = root.str("layout", "bus-branch");
  if (layout == "node-breaker") {
    f.node_breaker = parse_node_breaker(root, f.base_mva, f.frequency_hz);
    return f;
  }
  if (layout != "bus-branch") throw CaseError(fmt::format("case: unknown layout '{}'", layout));
  return parse_bus_branch(root, std::move(f));
}

std::string serialize_case(const CaseFile& f) {
  if (f.node_breaker) return network_json(*f.node_breaker).dump(1) + "\n";

  ojson root;
  root["format_version"] = f.format_version;
  root["layout"] = "bus-branch";
  root["base_mva"] = f.base_mva;
  root["frequency_hz"] = f.frequency_hz;
  auto& buses = root["buses"] = ojson::array();
  for (const auto& b : f.buses) buses.push_back({{"id", b.id}, {"nominal_kv", b.nominal_kv}});
  auto& branches = root["branches"] = ojson::array();
  for (const auto& br : f.branches) {
    branches.push_back({{"id", br.id},
                        {"from", br.from_bus},
                        {"to", br.to_bus},
                        {"r_pu", br.r_pu},
                        {"x_pu", br.x_pu},
                        {"b_pu", br.b_pu},
                        {"rating_mva", br.rating_mva},
                        {"is_transformer", br.is_transformer},
                        {"available", br.available}});
  }
  auto& gens = root["generators"] = ojson::array();
  for (const auto& g : f.generators) {
    ojson o{{"id", g.id},
            {"bus", g.bus},
            {"p_max_mw", g.p_max_mw},
            {"p_min_mw", g.p_min_mw},
            {"q_max_mvar", g.q_max_mvar},
            {"q_min_mvar", g.q_min_mvar},
            {"is_blackstart", g.is_blackstart}};
    put_opt(o, "droop_r_pu", g.droop_r_pu);
    put_opt(o, "s_rating_mva", g.s_rating_mva);
    o["v_setpoint_pu"] = g.v_setpoint_pu;
    put_opt(o, "startup_time_s", g.startup_time_s);
    put_opt(o, "crew_time_s", g.crew_time_s);
    o["is_renewable"] = g.is_renewable;
    o["available"] = g.available;
    o["p_mw"] = g.p_mw;
    o["q_mvar"] = g.q_mvar;
    gens.push_back(std::move(o));
  }
  auto& loads = root["loads"] = ojson::array();
  for (const auto& l : f.loads) {
    ojson o{{"id", l.id},
            {"bus", l.bus},
            {"p_mw", l.p_mw},
            {"q_mvar", l.q_mvar},
            {"is_critical", l.is_critical},
            {"available", l.available}};
    put_opt(o, "crew_time_s", l.crew_time_s);
    loads.push_back(std::move(o));
  }
  auto& shunts = root["shunts"] = ojson::array();
  for (const auto& s : f.shunts) {
    shunts.push_back({{"id", s.id},
                      {"bus", s.bus},
                      {"mvar_nominal", s.mvar_nominal},
                      {"discrete", s.discrete},
                      {"available", s.available}});
  }
  auto& subs = root["substations"] = ojson::array();
  for (const auto& s : f.substations) subs.push_back({{"id", s.id}, {"buses", s.buses}});
  auto& zones = root["zones"] = ojson::array();
  for (const auto& z : f.zones) {
    zones.push_back(zone_json(z.id, z.name, z.substations, z.blackstart_generators, z.critical_loads));
  }
  return root.dump(1) + "\n";
}

std::string serialize_network(const Network& network) { return network_json(network).dump(1) + "\n"; }

SubstationTemplate template_for_kv(double highest_kv) {
  if (highest_kv >= 230.0) return SubstationTemplate::double_bus_double_breaker;
  if (highest_kv >= 115.0) return SubstationTemplate::breaker_and_a_half;
  return SubstationTemplate::single_bus;
}

std::string_view to_string(SubstationTemplate t) {
  switch (t) {
    case SubstationTemplate::double_bus_double_breaker: return "double-bus-double-breaker";
    case SubstationTemplate::breaker_and_a_half: return "breaker-and-a-half";
    case SubstationTemplate::single_bus: return "single-bus";
  }
  return "?";
}

Network expand_node_breaker(const CaseFile& f, std::vector<std::string>* warnings) {
  if (f.node_breaker) return *f.node_breaker;

  Network net;
  net.base_mva = f.base_mva;
  net.f0_hz = f.frequency_hz;

  std::unordered_map<std::string, const CaseBus*> bus_by_id;
  for (const auto& b : f.buses) bus_by_id[b.id] = &b;

  // Substation grouping; unlisted buses form their own substation.
  std::vector<CaseSubstation> subs = f.substations;
  {
    std::unordered_set<std::string> grouped;
    for (const auto& s : subs) grouped.insert(s.buses.begin(), s.buses.end());
    for (const auto& b : f.buses) {
      if (!grouped.contains(b.id)) subs.push_back({b.id, {b.id}});
    }
  }

  // Elements attached to each bus, in section order.
  std::unordered_map<std::string, std::vector<Attachment>> attached;
  for (Index i = 0; i < f.branches.size(); ++i) {
    attached[f.branches[i].from_bus].push_back({ElementKind::branch, i, true, f.branches[i].id});
    attached[f.branches[i].to_bus].push_back({ElementKind::branch, i, false, f.branches[i].id});
  }
  for (Index i = 0; i < f.generators.size(); ++i) {
    attached[f.generators[i].bus].push_back({ElementKind::generator, i, false, f.generators[i].id});
  }
  for (Index i = 0; i < f.loads.size(); ++i) {
    attached[f.loads[i].bus].push_back({ElementKind::load, i, false, f.loads[i].id});
  }
  for (Index i = 0; i < f.shunts.size(); ++i) {
    attached[f.shunts[i].bus].push_back({ElementKind::shunt, i, false, f.shunts[i].id});
  }

  std::vector<Index> branch_from(f.branches.size(), kNoIndex);
  std::vector<Index> branch_to(f.branches.size(), kNoIndex);
  std::vector<Index> gen_node(f.generators.size(), kNoIndex);
  std::vector<Index> load_node(f.loads.size(), kNoIndex);
  std::vector<Index> shunt_node(f.shunts.size(), kNoIndex);

  Expander ex(net);
  for (const auto& sub : subs) {
    double top_kv = 0.0;
    std::size_t element_count = 0;
    for (const auto& b : sub.buses) {
      top_kv = std::max(top_kv, bus_by_id.at(b)->nominal_kv);
      element_count += attached[b].size();
    }
    if (element_count == 0) {
      throw CaseError(fmt::format("substation '{}' has no connected elements", sub.id));
    }
    const auto tmpl = template_for_kv(top_kv);

    for (const auto& bus : sub.buses) {
      const double kv = bus_by_id.at(bus)->nominal_kv;
      const auto& elements = attached[bus];
      const std::size_t n = elements.size();
      ex.reset_breakers();

      Index bb1 = ex.add_node(bus + ".BB1", sub.id, kv, NodeKind::busbar);
      Index bb2 = tmpl == SubstationTemplate::single_bus
                      ? kNoIndex
                      : ex.add_node(bus + ".BB2", sub.id, kv, NodeKind::busbar);

      std::vector<Index> junction(n, kNoIndex);
      if (tmpl == SubstationTemplate::breaker_and_a_half) {
        for (std::size_t bay = 0; 2 * bay < n; ++bay) {
          Index j1 = ex.add_node(fmt::format("{}.J{}", bus, 2 * bay + 1), sub.id, kv, NodeKind::junction);
          Index j2 = ex.add_node(fmt::format("{}.J{}", bus, 2 * bay + 2), sub.id, kv, NodeKind::junction);
          ex.add_breaker(bus, bb1, j1);
          ex.add_breaker(bus, j1, j2);
          ex.add_breaker(bus, j2, bb2);
          junction[2 * bay] = j1;
          if (2 * bay + 1 < n) junction[2 * bay + 1] = j2;
        }
      } else {
        for (std::size_t k = 0; k < n; ++k) {
          Index j = ex.add_node(fmt::format("{}.J{}", bus, k + 1), sub.id, kv, NodeKind::junction);
          ex.add_breaker(bus, bb1, j);
          if (bb2 != kNoIndex) ex.add_breaker(bus, bb2, j);
          junction[k] = j;
        }
      }

      for (std::size_t k = 0; k < n; ++k) {
        Index t = ex.add_terminal(bus, sub.id, kv, junction[k], k + 1);
        const auto& a = elements[k];
        switch (a.kind) {
          case ElementKind::branch:
            (a.from_end ? branch_from : branch_to)[a.element] = t;
            break;
          case ElementKind::generator: gen_node[a.element] = t; break;
          case ElementKind::load: load_node[a.element] = t; break;
          case ElementKind::shunt: shunt_node[a.element] = t; break;
          default: break;
        }
      }
    }
  }

  for (Index i = 0; i < f.branches.size(); ++i) {
    const auto& c = f.branches[i];
    Branch br;
    br.id = c.id;
    br.from_node = branch_from[i];
    br.to_node = branch_to[i];
    br.r_pu = c.r_pu;
    br.x_pu = c.x_pu;
    br.b_pu = c.b_pu;
    br.rating_mva = c.rating_mva;
    br.available = c.available;
    br.closed = c.available;
    br.is_transformer = c.is_transformer;
    br.zero_impedance = c.r_pu == 0.0 && c.x_pu == 0.0;
    net.branches.push_back(std::move(br));
  }

  std::unordered_set<std::string> listed_bsu, listed_cl;
  for (const auto& z : f.zones) {
    listed_bsu.insert(z.blackstart_generators.begin(), z.blackstart_generators.end());
    listed_cl.insert(z.critical_loads.begin(), z.critical_loads.end());
  }
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  for (Index i = 0; i < f.generators.size(); ++i) {
    const auto& c = f.generators[i];
    Generator g;
    g.id = c.id;
    g.node = gen_node[i];
    g.p_max_mw = c.p_max_mw;
    g.p_min_mw = c.p_min_mw;
    g.q_max_mvar = c.q_max_mvar;
    g.q_min_mvar = c.q_min_mvar;
    g.is_blackstart = c.is_blackstart || listed_bsu.contains(c.id);
    g.droop_r_pu = c.droop_r_pu.value_or(0.05);
    g.s_rating_mva = c.s_rating_mva.value_or(c.p_max_mw);
    g.v_setpoint_pu = c.v_setpoint_pu;
    if (!c.startup_time_s) warn(fmt::format("generator '{}': startup_time_s missing, using 0", c.id));
    if (!c.crew_time_s) warn(fmt::format("generator '{}': crew_time_s missing, using 0", c.id));
    g.startup_time_s = c.startup_time_s.value_or(0.0);
    g.crew_time_s = c.crew_time_s.value_or(0.0);
    g.available = c.available;
    g.is_renewable = c.is_renewable;
    g.online = c.available;
    g.p_set_mw = c.p_mw;
    g.q_mvar = c.q_mvar;
    net.generators.push_back(std::move(g));
  }
  for (Index i = 0; i < f.loads.size(); ++i) {
    const auto& c = f.loads[i];
    Load l;
    l.id = c.id;
    l.node = load_node[i];
    l.p_mw = c.p_mw;
    l.q_mvar = c.q_mvar;
    l.is_critical = c.is_critical || listed_cl.contains(c.id);
    l.available = c.available;
    if (!c.crew_time_s) warn(fmt::format("load '{}': crew_time_s missing, using 0", c.id));
    l.crew_time_s = c.crew_time_s.value_or(0.0);
    l.serve(c.available ? c.p_mw : 0.0);
    net.loads.push_back(std::move(l));
  }
  for (Index i = 0; i < f.shunts.size(); ++i) {
    const auto& c = f.shunts[i];
    Shunt s;
    s.id = c.id;
    s.node = shunt_node[i];
    s.mvar_nominal = c.mvar_nominal;
    s.discrete = c.discrete;
    s.available = c.available;
    s.closed = c.available;
    net.shunts.push_back(std::move(s));
  }

  for (const auto& cz : f.zones) {
    Zone z;
    z.id = cz.id;
    z.name = cz.name;
    z.substation_ids = cz.substations;
    net.zones.push_back(std::move(z));
  }
  try {
    net.reindex();
  } catch (const ModelError& e) {
    throw CaseError(e.what());
  }

  // Zone BSU/CL lists: listed ids plus flagged units inside the zone.
  for (Index zi = 0; zi < net.zones.size(); ++zi) {
    std::set<std::string> bsu, cl;
    for (const auto& g : net.generators) {
      if (g.is_blackstart && net.zone_of_node(g.node) == zi) bsu.insert(g.id);
    }
    for (const auto& l : net.loads) {
      if (l.is_critical && net.zone_of_node(l.node) == zi) cl.insert(l.id);
    }
    for (const auto& id : f.zones[zi].blackstart_generators) {
      if (!bsu.contains(id)) {
        throw CaseError(fmt::format("zone '{}' lists blackstart unit '{}' outside the zone", f.zones[zi].id, id));
      }
    }
    for (const auto& id : f.zones[zi].critical_loads) {
      if (!cl.contains(id)) {
        throw CaseError(fmt::format("zone '{}' lists critical load '{}' outside the zone", f.zones[zi].id, id));
      }
    }
    net.zones[zi].bsu_generator_ids.assign(bsu.begin(), bsu.end());
    net.zones[zi].critical_load_ids.assign(cl.begin(), cl.end());
  }
  net.reindex();
  return net;
}

std::vector<AvailabilityOverride> parse_overrides(std::string_view text) {
  json j = parse_json(text, "overrides");
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("overrides")) throw CaseError("overrides: missing field 'overrides'");
    list = &j["overrides"];
  }
  if (!list->is_array()) throw CaseError("overrides: expected an array");
  std::vector<AvailabilityOverride> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    Reader r((*list)[i], fmt::format("overrides[{}]", i));
    auto kind_text = r.str("kind");
    auto kind = element_kind_from_string(kind_text);
    if (!kind || *kind == ElementKind::node) {
      throw CaseError(fmt::format("{}: unknown element kind '{}'", r.path(), kind_text));
    }
    out.push_back({*kind, r.str("id"), r.flag("available", false)});
  }
  return out;
}

Network apply_blackout(Network net, std::span<const AvailabilityOverride> overrides) {
  for (const auto& o : overrides) {
    Index i = net.find(o.kind, o.id);
    if (i == kNoIndex) {
      throw CaseError(fmt::format("override references unknown {} '{}'", to_string(o.kind), o.id));
    }
    switch (o.kind) {
      case ElementKind::breaker: net.breakers[i].available = o.available; break;
      case ElementKind::branch: net.branches[i].available = o.available; break;
      case ElementKind::generator: net.generators[i].available = o.available; break;
      case ElementKind::load: net.loads[i].available = o.available; break;
      case ElementKind::shunt: net.shunts[i].available = o.available; break;
      case ElementKind::node: break;
    }
  }
  for (auto& b : net.breakers) b.closed = false;
  for (auto& br : net.branches) br.closed = br.internal;
  for (auto& g : net.generators) {
    g.online = false;
    g.p_set_mw = 0.0;
    g.q_mvar = 0.0;
    if (g.is_renewable) g.available = false;
  }
  for (auto& l : net.loads) l.serve(0.0);
  for (auto& s : net.shunts) s.closed = false;
  return net;
}

// ---------------------------------------------------------------------------
// Plans and metrics.

namespace {

ojson event_json(const Event& e) {
  ojson o{{"time_s", e.time_s}, {"kind", to_string(e.kind)}, {"element", e.element}};
  switch (e.kind) {
    case EventKind::gen_online:
      o["mw"] = e.mw;
      o["setpoint_pu"] = e.setpoint_pu;
      break;
    case EventKind::load_increment:
    case EventKind::load_shed:
      o["mw"] = e.mw;
      o["mvar"] = e.mvar;
      break;
    case EventKind::vref_change: o["setpoint_pu"] = e.setpoint_pu; break;
    case EventKind::redispatch: o["mw"] = e.mw; break;
    default: break;
  }
  o["cause"] = e.cause;
  return o;
}

ojson summary_json(const IslandSummary& s) {
  return ojson{{"island", s.island},
               {"zones", s.zones},
               {"gen_mw", s.gen_mw},
               {"gen_mvar", s.gen_mvar},
               {"load_mw", s.load_mw},
               {"load_mvar", s.load_mvar},
               {"v_min_pu", s.v_min_pu},
               {"v_max_pu", s.v_max_pu},
               {"frequency_hz", s.frequency_hz},
               {"max_loading_pct", s.max_loading_pct}};
}

ojson violation_json(const Violation& v) {
  return ojson{{"kind", to_string(v.kind)},         {"element", v.element},
               {"value", v.value},                  {"tier", to_string(v.tier)},
               {"first_seen_s", v.first_seen_s},    {"duration_s", v.duration_s},
               {"resolved", v.resolved}};
}

}  // namespace

std::string export_plan(const RestorationPlan& plan) {
  ojson root;
  root["format"] = "restoration-plan";
  root["format_version"] = kPlanFormatVersion;
  root["status"] = to_string(plan.status);
  root["diagnostic"] = plan.diagnostic;
  const auto& st = plan.statistics;
  root["statistics"] = {{"total_load_mw", st.total_load_mw},
                        {"served_mw", st.served_mw},
                        {"restored_pct", st.restored_pct},
                        {"duration_s", st.duration_s},
                        {"remediation_events", st.remediation_events}};
  root["warnings"] = plan.warnings;
  auto& viol = root["violations"] = ojson::array();
  for (const auto& v : plan.violation_log) viol.push_back(violation_json(v));
  auto& steps = root["steps"] = ojson::array();
  for (const auto& s : plan.steps) {
    ojson o{{"time_s", s.time_s}, {"stage", s.stage}, {"scope", s.scope}, {"action", s.action}};
    auto& ev = o["events"] = ojson::array();
    for (const auto& e : s.events) ev.push_back(event_json(e));
    auto& sum = o["summary"] = ojson::array();
    for (const auto& is : s.summary) sum.push_back(summary_json(is));
    steps.push_back(std::move(o));
  }
  return root.dump(1) + "\n";
}

RestorationPlan parse_plan(std::string_view text) {
  json j = parse_json(text, "plan");
  Reader root(j, "plan");
  if (root.str("format", "") != "restoration-plan") throw CaseError("plan: not a restoration-plan document");
  if (static_cast<int>(root.num("format_version")) != kPlanFormatVersion) {
    throw CaseError("plan: unsupported format_version");
  }
  RestorationPlan plan;
  auto status = plan_status_from_string(root.str("status"));
  if (!status) throw CaseError("plan: unknown status");
  plan.status = *status;
  plan.diagnostic = root.str("diagnostic", "");
  if (root.has("statistics")) {
    Reader st(j["statistics"], "statistics");
    plan.statistics.total_load_mw = st.num("total_load_mw", 0.0);
    plan.statistics.served_mw = st.num("served_mw", 0.0);
    plan.statistics.restored_pct = st.num("restored_pct", 0.0);
    plan.statistics.duration_s = st.num("duration_s", 0.0);
    plan.statistics.remediation_events = static_cast<int>(st.num("remediation_events", 0.0));
  }
  plan.warnings = root.strings("warnings");
  root.each("violations", [&](const Reader& r) {
    Violation v;
    auto kind = r.str("kind");
    v.kind = kind == "voltage" ? ViolationKind::voltage
             : kind == "frequency" ? ViolationKind::frequency
                                   : ViolationKind::branch;
    v.element = r.str("element");
    v.value = r.num("value");
    v.tier = r.str("tier") == "instant" ? Tier::instant : Tier::sustained;
    v.first_seen_s = r.num("first_seen_s", 0.0);
    v.duration_s = r.num("duration_s", 0.0);
    v.resolved = r.flag("resolved", false);
    plan.violation_log.push_back(std::move(v));
  });
  double last_time = -1.0;
  root.each("steps", [&](const Reader& r) {
    Step s;
    s.time_s = r.num("time_s");
    s.stage = static_cast<int>(r.num("stage"));
    s.scope = r.str("scope");
    s.action = r.str("action", "");
    r.each("events", [&](const Reader& er) {
      Event e;
      e.time_s = er.num("time_s");
      auto kind = event_kind_from_string(er.str("kind"));
      if (!kind) throw CaseError(fmt::format("{}: unknown event kind", er.path()));
      e.kind = *kind;
      e.element = er.str("element");
      e.mw = er.num("mw", 0.0);
      e.mvar = er.num("mvar", 0.0);
      e.setpoint_pu = er.num("setpoint_pu", 0.0);
      e.cause = er.str("cause", "");
      if (e.time_s < last_time) {
        throw CaseError(fmt::format("{}: event times must be nondecreasing", er.path()));
      }
      last_time = e.time_s;
      s.events.push_back(std::move(e));
    });
    r.each("summary", [&](const Reader& sr) {
      IslandSummary is;
      is.island = sr.str("island");
      is.zones = sr.str("zones", "");
      is.gen_mw = sr.num("gen_mw");
      is.gen_mvar = sr.num("gen_mvar");
      is.load_mw = sr.num("load_mw");
      is.load_mvar = sr.num("load_mvar");
      is.v_min_pu = sr.num("v_min_pu");
      is.v_max_pu = sr.num("v_max_pu");
      is.frequency_hz = sr.num("frequency_hz");
      is.max_loading_pct = sr.num("max_loading_pct");
      s.summary.push_back(std::move(is));
    });
    plan.steps.push_back(std::move(s));
  });
  return plan;
}

std::string export_metrics(std::span<const Step> history) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& s : history) {
    for (const auto& is : s.summary) {
      out += fmt::format("{:.3f},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n",
                         s.time_s, s.stage, s.scope, is.island, is.zones, is.gen_mw, is.gen_mvar,
                         is.load_mw, is.load_mvar, is.v_min_pu, is.v_max_pu, is.frequency_hz,
                         is.max_loading_pct);
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CaseError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CaseError(fmt::format("cannot write '{}'", path));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw CaseError(fmt::format("write failed for '{}'", path));
}

}  // namespace restore
