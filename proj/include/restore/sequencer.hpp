#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "restore/model.hpp"
#include "restore/monitor.hpp"
#include "restore/plan.hpp"

namespace restore {

enum class GenKey { max_mw, min_mw, startup_time, distance, crew_time };
enum class LoadKey { max_mw, min_mw, crew_time };

std::string_view to_string(GenKey key);
std::string_view to_string(LoadKey key);
std::optional<GenKey> gen_key_from_string(std::string_view text);
std::optional<LoadKey> load_key_from_string(std::string_view text);

struct Config {
  double criterion1_alpha = 0.05;
  GenKey criterion2_key = GenKey::max_mw;
  LoadKey criterion3_key = LoadKey::min_mw;
  double criterion4_beta = 0.80;
  double load_inc_mw = 20.0;
  bool parallel_subareas = true;
  double gen_vref_pu = 1.04;
  double t_load_s = 20.0;
  double t_event_s = 10.0;
  /// Add startup and crew times to the interval after the device's step.
  bool device_times_advance_clock = false;
  LimitSet limits;
  MonitorOptions monitor;
  int jobs = 1;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

enum class Choice { generator, load, done };

/// Criterion 1: a generator iff alpha * headroom < next increment.
Choice choose_next(double headroom_mw, double next_increment_mw, bool have_generators, bool have_loads,
                   double alpha);

/// Criterion 2 over `candidates`. `distance` is node-indexed and only read for
/// GenKey::distance. Ties go to the lower id.
Index select_generator(const Network& network, std::span<const Index> candidates, GenKey key,
                       const std::vector<double>* distance = nullptr);

/// Criterion 3 over `candidates`, ties to the lower id.
Index select_load(const Network& network, std::span<const Index> candidates, LoadKey key);

/// min(load_inc, unserved demand).
double next_increment_mw(const Load& load, double load_inc_mw);

/// Criterion 4: served >= beta * total demand of every load in the case.
bool stopping_met(const Network& network, double beta);

double total_demand_mw(const Network& network, Index zone = kNoIndex);
double served_mw(const Network& network, Index zone = kNoIndex);

struct PlanResult {
  RestorationPlan plan;
  Network final_network;
};

/// Full three-stage restoration of a blacked-out network.
PlanResult run(const Network& blackout, const Config& config);

}  // namespace restore
