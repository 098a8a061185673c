#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "restore/model.hpp"
#include "restore/plan.hpp"
#include "restore/solver.hpp"

namespace restore {

/// Two-tier limit set. Instant limits apply at once; sustained limits fire
/// once a breach has lasted `*_duration_s`. Every band is open: a value on
/// the boundary is a breach.
struct LimitSet {
  double v_instant_min = 0.8;
  double v_instant_max = 2.0;
  double v_sustained_min = 0.95;
  double v_sustained_max = 1.10;
  double v_duration_s = 10.0;
  double f_instant_min = 59.0;
  double f_instant_max = 61.0;
  double f_sustained_min = 59.6;
  double f_sustained_max = 60.4;
  double f_duration_s = 10.0;
  double branch_max_pct = 90.0;

  /// Instant bands contain sustained bands; durations non-negative.
  [[nodiscard]] bool valid() const;
};

/// Quasi-static timeline position: the steady state being checked holds from
/// `now_s` until the next event, `hold_s` later.
struct Clock {
  double now_s = 0.0;
  double hold_s = 0.0;
};

/// First-seen bookkeeping for sustained-tier breaches across checks.
class SustainedTracker {
 public:
  /// Elapsed breach time including the hold; records first sight.
  double observe(const std::string& key, double now_s, double hold_s);
  void retain_only(const std::set<std::string>& active);
  void forget(const std::string& key);
  [[nodiscard]] double first_seen(const std::string& key, double fallback) const;

 private:
  std::map<std::string, double> first_seen_;
};

/// Steady-state frequency mapped to an estimated transient extreme.
inline double frequency_nadir(double f0, double f_ss, double nadir_factor) {
  return f0 + nadir_factor * (f_ss - f0);
}

std::vector<Violation> check(const Network& network, const Island& island, const SolutionState& solution,
                             const LimitSet& limits, const Clock& clock, SustainedTracker& tracker,
                             double nadir_factor);

/// Electrical summary of a solved island.
IslandSummary summarize(const Network& network, const Island& island, const SolutionState& solution);

struct MonitorOptions {
  double nadir_factor = 1.5;
  double vref_step_pu = 0.01;
  double vref_min_pu = 0.95;
  double vref_max_pu = 1.10;
  int lcdf_max_rounds = 5;
  int max_remedies = 20;
  SolveOptions solve;
};

/// A served slice of load, newest last; shedding unwinds this stack.
struct ServedIncrement {
  Index load = kNoIndex;
  double mw = 0.0;
};

/// Mutable state shared by the remedies for one plan event.
struct RemedyContext {
  Network& network;
  const LimitSet& limits;
  const MonitorOptions& options;
  Clock clock;
  Index zone = kNoIndex;           // islands considered; kNoIndex = all
  Index focus_node = kNoIndex;     // most recent pickup location
  std::vector<ServedIncrement>& served;
  std::set<Index>& capped_loads;   // loads barred from further pickup
  std::optional<ServedIncrement> pending;  // increment applied by this event

  SustainedTracker tracker;
  std::set<Index> ineffective_units;
  std::set<Index> tried_shunts;
  std::set<Index> tried_branches;
  int branch_rounds = 0;
};

struct RemedyResult {
  std::vector<Event> events;
  bool exhausted = false;
};

/// Raise (or lower) setpoints of units nearest the focus, then shed the
/// newest non-critical increments. A failed solve counts as underfrequency.
RemedyResult remediate_frequency(RemedyContext& ctx, const Island& island, const SolutionState* solution,
                                 const Violation& violation);

/// Step voltage setpoints of the nearest units, then switch a shunt that keeps
/// every voltage in the sustained band, then roll back the pending increment.
RemedyResult remediate_voltage(RemedyContext& ctx, const Island& island, const SolutionState& solution,
                               const Violation& violation);

struct ClosureCandidate {
  Index branch = kNoIndex;
  std::vector<Event> events;  // substation switching plus the branch closure
  LcdfResult factor;
};

/// Open branches that could be closed inside the island, ranked by relief
/// (most negative first, ties by id).
std::vector<ClosureCandidate> rank_closure_candidates(const Network& network, const Island& island,
                                                      const SolutionState& solution, Index monitored);

/// Close the best relieving candidate whose trial solve adds no violation,
/// up to `lcdf_max_rounds`; then shed load.
RemedyResult remediate_branch(RemedyContext& ctx, const Island& island, const SolutionState& solution,
                              const Violation& violation);

/// Shed the newest increment in the island, non-critical loads first.
RemedyResult shed_newest(RemedyContext& ctx, const Island& island, const std::string& cause);

struct IslandOutcome {
  Island island;
  std::optional<SolutionState> solution;
  IslandSummary summary;
};

struct StabilizeResult {
  bool ok = false;
  std::vector<Event> events;            // remedial events, in application order
  std::vector<Violation> violations;    // everything seen, resolved flag set
  std::vector<IslandOutcome> islands;   // final solved islands in scope
  std::string diagnostic;
};

/// Energized islands intersecting the zone (all when zone is kNoIndex).
std::vector<Island> islands_in_scope(const Network& network, Index zone);

/// Solve, check and remediate until no violation remains, the remedy budget is
/// spent, or every remedy is exhausted. Remedies are applied to ctx.network.
/// Remedy order per round: frequency, voltage, branch.
StabilizeResult stabilize(RemedyContext& ctx);

}  // namespace restore
