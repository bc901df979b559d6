#pragma once

#include "lasrelay/scenario.hpp"

namespace lasrelay {

/// Worst violation per constraint family, each in native units.
struct FeasibilityReport {
  double mobility_speed = 0.0;      // m/s above v_max
  double mobility_endpoint = 0.0;   // m off q_init/q_final
  double info_causality = 0.0;      // bps/Hz of forwarded-but-unreceived data
  double energy_under_floor = 0.0;  // J below theta (clamped received power)
  double energy_over_cap = 0.0;     // J above E (clamped received power)
  double energy_under_floor_affine = 0.0;  // diagnostics: affine Eq. 2 variant
  double energy_over_cap_affine = 0.0;
  double power_bounds = 0.0;        // W outside the boxes
  double rate_sum_shortfall = 0.0;  // bps/Hz below R_sum
  double tolerance = 1e-6;
  bool feasible = false;

  double max_violation() const;
};

struct SolutionMetrics {
  double f_ee = 0.0;
  double f_pe = 0.0;
  double weighted_objective = 0.0;  // f_ee + gamma * f_pe
  double sum_rate = 0.0;            // achieved relay sum-rate, bps/Hz
  double final_battery = 0.0;       // J
  std::vector<double> battery_trace;  // battery after each slot, clamped physics
};

struct MobilityViolation {
  double speed_excess = 0.0;     // m/s
  double endpoint_error = 0.0;   // m
};

/// Max over m of (relay prefix rate - source prefix rate)_+, Eq. 4 form.
double check_info_causality(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc);

/// (max under-floor, max over-cap) of the battery trace in joules, using the
/// clamped received-power model. Battery never flies in the final slot.
std::pair<double, double> check_energy_causality(const Trajectory& traj, const PowerSchedule& pw,
                                                 const Scenario& sc);

/// Same with the unclamped affine Eq. 2 received power (diagnostics variant).
std::pair<double, double> check_energy_causality_affine(const Trajectory& traj,
                                                        const PowerSchedule& pw, const Scenario& sc);

MobilityViolation check_mobility(const Trajectory& traj, const Scenario& sc);

/// Worst power-box violation in watts over the three schedules (plus the
/// p_s[N-1] = 0, p_r[0] = 0 slot conventions).
double check_power_bounds(const PowerSchedule& pw, const Scenario& sc);

FeasibilityReport check_feasibility(const Trajectory& traj, const PowerSchedule& pw,
                                    const Scenario& sc, double tolerance = 1e-6);

/// Full metrics of a candidate solution; propagates the f_PE division error.
SolutionMetrics objective(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc);

/// Norm of the gradient of the weighted objective projected onto the feasible
/// directions of the active constraints, by central finite differences; scaled
/// by 1/(1+|objective|). Zero at a stationary point.
/// Throws std::invalid_argument when the point is infeasible beyond tol.
double stationarity_residual(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc,
                             double feas_tol = 1e-5);

}  // namespace lasrelay
