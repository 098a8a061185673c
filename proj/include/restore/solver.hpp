#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "restore/model.hpp"

namespace restore {

class SolverError : public std::runtime_error {
 public:
  enum class Kind {
    nonconvergence,  // Newton iterations exhausted
    infeasible,      // every unit clamped and mismatch remains
    collapse,        // no responsive governor capacity for a nonzero imbalance
    singular,        // DC susceptance matrix or Thevenin reactance singular
    topology,        // island/element precondition failed
  };

  SolverError(Kind kind, const std::string& what, double last_mismatch = 0.0)
      : std::runtime_error(what), kind_(kind), last_mismatch_(last_mismatch) {}

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double last_mismatch() const { return last_mismatch_; }

 private:
  Kind kind_;
  double last_mismatch_;
};

/// Bus view of an island: closed breakers and closed zero-impedance branches
/// collapse their endpoints into one bus.
struct BusMap {
  std::vector<Index> nodes;        // island nodes, ascending
  std::vector<Index> bus_of_node;  // parallel to `nodes`
  std::vector<std::vector<Index>> bus_nodes;

  [[nodiscard]] std::size_t bus_count() const { return bus_nodes.size(); }
  /// Bus holding `node`, or kNoIndex when the node is outside the island.
  [[nodiscard]] Index bus_of(Index node) const;
};

BusMap collapse_island(const Network& network, const Island& island);

struct AdmittanceMatrix {
  BusMap buses;
  Eigen::MatrixXcd y;  // per-unit on the system base
};

AdmittanceMatrix build_ybus(const Network& network, const Island& island);

struct GeneratorResult {
  Index generator = kNoIndex;
  double p_mw = 0.0;
  double q_mvar = 0.0;
  bool at_p_limit = false;
  bool at_q_limit = false;
};

struct BranchResult {
  Index branch = kNoIndex;
  double p_from_mw = 0.0;
  double q_from_mvar = 0.0;
  double p_to_mw = 0.0;
  double q_to_mvar = 0.0;
  double loading_pct = 0.0;
};

struct SolutionState {
  std::vector<Index> nodes;  // ascending
  std::vector<double> v_pu;
  std::vector<double> angle_rad;
  std::vector<GeneratorResult> generators;
  std::vector<BranchResult> branches;
  double frequency_hz = 0.0;
  bool converged = false;
  int iterations = 0;
  double max_mismatch_pu = 0.0;
  Index reference_generator = kNoIndex;

  [[nodiscard]] bool contains(Index node) const;
  [[nodiscard]] double voltage(Index node) const;  // 0 outside the island
  [[nodiscard]] double angle(Index node) const;
  [[nodiscard]] const GeneratorResult* generator(Index g) const;
};

struct SolveOptions {
  double tolerance_pu = 1e-8;
  int max_iterations = 25;
  /// Spread the active-power imbalance over online units by governor gain.
  /// When false the reference unit alone balances the island at nominal
  /// frequency.
  bool distribute_mismatch = true;
  bool enforce_q_limits = true;
  const SolutionState* warm_start = nullptr;
};

/// Reference unit: largest p_max among online units in the island, ties by id.
Index reference_generator(const Network& network, const Island& island);

SolutionState solve_powerflow(const Network& network, const Island& island,
                              const SolveOptions& options = {});

/// Steady-state droop frequency after the island's units absorb `delta_p_mw`
/// beyond their setpoints. Units that saturate are removed from the response
/// and their saturated share is taken from the imbalance first.
double island_frequency(const Network& network, const Island& island, double delta_p_mw);

/// Node-indexed net injections in MW: online unit output (from `solution`
/// when given, else setpoints) minus served load.
std::vector<double> node_injections_mw(const Network& network, const Island& island,
                                       const SolutionState* solution = nullptr);

/// Linear (DC) model of an island.
class DcModel {
 public:
  DcModel(const Network& network, const Island& island);

  [[nodiscard]] const BusMap& buses() const { return buses_; }
  [[nodiscard]] Index reference_bus() const { return reference_; }
  [[nodiscard]] double base_mva() const { return base_mva_; }

  /// Bus angles (rad) for node-indexed injections in MW.
  [[nodiscard]] Eigen::VectorXd angles(std::span<const double> node_injections_mw) const;
  /// Branch flow in MW from an angle vector; the branch must be in the model.
  [[nodiscard]] double flow_mw(Index branch, const Eigen::VectorXd& theta) const;
  [[nodiscard]] bool has_branch(Index branch) const;

  /// Flow change on `monitored` per MW transferred from bus i to bus j.
  [[nodiscard]] double ptdf(Index monitored, Index bus_i, Index bus_j) const;
  /// Driving-point reactance between two buses (p.u.).
  [[nodiscard]] double thevenin_x(Index bus_i, Index bus_j) const;

 private:
  struct Line {
    Index branch;
    Index from_bus;
    Index to_bus;
    double x;
  };
  [[nodiscard]] const Line& line(Index branch) const;

  BusMap buses_;
  Index reference_ = 0;
  double base_mva_ = 100.0;
  std::vector<Line> lines_;
  Eigen::MatrixXd z_;  // inverse reduced susceptance, zero row/col at the reference
};

/// Per-branch DC flows (MW) for closed, non-zero-impedance island branches.
std::vector<std::pair<Index, double>> dc_flows(const Network& network, const Island& island,
                                               std::span<const double> node_injections_mw);

struct LcdfResult {
  double factor = 0.0;          // dF_monitored / F_candidate
  double monitored_flow_mw = 0.0;
  double candidate_flow_mw = 0.0;  // flow on the candidate once closed, i -> j
  double delta_flow_mw = 0.0;   // change on the monitored branch
  double relief_mw = 0.0;       // |F_m + dF_m| - |F_m|; negative relieves
};

/// Line closure distribution factor for closing a reactance `candidate_x_pu`
/// between buses i and j of the model.
LcdfResult lcdf(const DcModel& model, std::span<const double> node_injections_mw, Index monitored,
                Index bus_i, Index bus_j, double candidate_x_pu);

/// Network-level form: `candidate` must be open with both endpoints energized
/// in the island.
LcdfResult lcdf(const Network& network, const Island& island, Index monitored, Index candidate,
                const SolutionState* solution = nullptr);

}  // namespace restore
