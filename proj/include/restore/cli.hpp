#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "restore/caseio.hpp"
#include "restore/monitor.hpp"
#include "restore/plan.hpp"
#include "restore/sequencer.hpp"

namespace restore {

enum ExitCode : int { kExitComplete = 0, kExitInputError = 1, kExitPartial = 2, kExitInfeasible = 3 };

/// Parses a JSON config object. Keys mirror the settings table
/// (criterion1_alpha, t_load_s, ...); missing keys keep their defaults and
/// unknown keys are rejected. Throws CaseError.
Config parse_config(std::string_view text);
std::string serialize_config(const Config& config);

struct ZoneRestoration {
  std::string zone;
  double total_mw = 0.0;
  double served_mw = 0.0;
  double restored_pct = 0.0;
};

struct RunReport {
  PlanStatus status = PlanStatus::partial;
  double duration_s = 0.0;
  double total_load_mw = 0.0;
  double served_mw = 0.0;
  double restored_pct = 0.0;
  std::vector<ZoneRestoration> zones;
  std::map<std::string, int> remediation_by_kind;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;
  std::string diagnostic;
};

RunReport build_report(const RestorationPlan& plan, const Network& final_network);
std::string export_report(const RunReport& report);

/// Loads a case, applies overrides and forces the all-open blackout state.
Network load_blackout(const std::string& case_path, const std::string& overrides_path,
                      std::vector<std::string>* warnings);

struct ReplayResult {
  bool ok = true;
  std::vector<std::string> problems;
  std::vector<Step> replayed;  // steps with re-solved summaries
  Network final_network;
};

/// Re-applies every event to `blackout`, re-solves each step's islands from a
/// flat start, checks limits and compares against the recorded summaries.
ReplayResult replay_plan(const Network& blackout, const RestorationPlan& plan, const Config& config);

struct CliOptions {
  std::string case_path;
  std::string config_path;
  std::string overrides_path;
  std::string out_dir = ".";
  std::string plan_path;  // validate; defaults to <out>/plan.json
  std::optional<int> jobs;
  bool verbose = false;
};

int cmd_plan(const CliOptions& options, std::ostream& err);
int cmd_validate(const CliOptions& options, std::ostream& err);
int cmd_convert(const CliOptions& options, std::ostream& err);
int cmd_inspect(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace restore
