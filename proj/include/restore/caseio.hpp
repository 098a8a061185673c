#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "restore/model.hpp"
#include "restore/plan.hpp"

namespace restore {

/// Parse and validation failures for case, override and plan documents.
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCaseFormatVersion = 1;
inline constexpr int kPlanFormatVersion = 1;

struct CaseBus {
  std::string id;
  double nominal_kv = 0.0;
  bool operator==(const CaseBus&) const = default;
};

struct CaseBranch {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  double r_pu = 0.0;
  double x_pu = 0.0;
  double b_pu = 0.0;
  double rating_mva = 0.0;
  bool is_transformer = false;
  bool available = true;
  bool operator==(const CaseBranch&) const = default;
};

struct CaseGenerator {
  std::string id;
  std::string bus;
  double p_max_mw = 0.0;
  double p_min_mw = 0.0;
  double q_max_mvar = 0.0;
  double q_min_mvar = 0.0;
  bool is_blackstart = false;
  std::optional<double> droop_r_pu;
  std::optional<double> s_rating_mva;
  double v_setpoint_pu = 1.0;
  std::optional<double> startup_time_s;
  std::optional<double> crew_time_s;
  bool is_renewable = false;
  bool available = true;
  double p_mw = 0.0;  // pre-disturbance dispatch
  double q_mvar = 0.0;
  bool operator==(const CaseGenerator&) const = default;
};

struct CaseLoad {
  std::string id;
  std::string bus;
  double p_mw = 0.0;
  double q_mvar = 0.0;
  bool is_critical = false;
  bool available = true;
  std::optional<double> crew_time_s;
  bool operator==(const CaseLoad&) const = default;
};

struct CaseShunt {
  std::string id;
  std::string bus;
  double mvar_nominal = 0.0;
  bool discrete = true;
  bool available = true;
  bool operator==(const CaseShunt&) const = default;
};

struct CaseSubstation {
  std::string id;
  std::vector<std::string> buses;
  bool operator==(const CaseSubstation&) const = default;
};

struct CaseZone {
  std::string id;
  std::string name;
  std::vector<std::string> substations;
  std::vector<std::string> blackstart_generators;
  std::vector<std::string> critical_loads;
  bool operator==(const CaseZone&) const = default;
};

/// A parsed case document. Bus-branch documents fill the bus-level sections;
/// node-breaker documents (as written by `convert`) carry the expanded
/// network directly in `node_breaker`.
struct CaseFile {
  int format_version = kCaseFormatVersion;
  double base_mva = 100.0;
  double frequency_hz = 60.0;
  std::vector<CaseBus> buses;
  std::vector<CaseBranch> branches;
  std::vector<CaseGenerator> generators;
  std::vector<CaseLoad> loads;
  std::vector<CaseShunt> shunts;
  std::vector<CaseSubstation> substations;
  std::vector<CaseZone> zones;
  std::optional<Network> node_breaker;

  bool operator==(const CaseFile&) const = default;
};

CaseFile parse_case(std::string_view text);
std::string serialize_case(const CaseFile& file);
std::string serialize_network(const Network& network);

enum class SubstationTemplate { double_bus_double_breaker, breaker_and_a_half, single_bus };

/// Template chosen from the highest nominal voltage in a substation.
SubstationTemplate template_for_kv(double highest_kv);
std::string_view to_string(SubstationTemplate t);

/// Expands a bus-branch case into node-breaker form with every switch closed
/// and generators/loads at their case dispatch. Node-breaker documents are
/// returned as-is. `warnings` collects defaulted attributes.
Network expand_node_breaker(const CaseFile& file, std::vector<std::string>* warnings = nullptr);

struct AvailabilityOverride {
  ElementKind kind = ElementKind::generator;
  std::string id;
  bool available = true;
  bool operator==(const AvailabilityOverride&) const = default;
};

std::vector<AvailabilityOverride> parse_overrides(std::string_view text);

/// All-open blackout state: every breaker and switchable branch open, every
/// unit offline, every load unserved, every shunt open. Overrides are applied
/// and renewable units marked unavailable.
Network apply_blackout(Network network, std::span<const AvailabilityOverride> overrides = {});

std::string export_plan(const RestorationPlan& plan);
RestorationPlan parse_plan(std::string_view text);

inline constexpr std::string_view kMetricsHeader =
    "time_s,stage,scope,island,zones,gen_mw,gen_mvar,load_mw,load_mvar,v_min_pu,v_max_pu,"
    "frequency_hz,max_loading_pct";

/// One CSV row per island summary per step, in plan order.
std::string export_metrics(std::span<const Step> history);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace restore
