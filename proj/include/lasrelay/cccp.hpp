#pragma once

#include "lasrelay/evaluation.hpp"
#include "lasrelay/scenario.hpp"
#include "lasrelay/socp.hpp"

namespace lasrelay::cccp {

/// Full variable set of the transformed problem, kept feasible for it at
/// every iteration. Arrays are slot-indexed 0..N-1 with the boundary
/// conventions s_r[0] = s_s[N-1] = 0 (and the matching hypograph entries).
struct CccpState {
  Trajectory traj;
  PowerSchedule pw;
  Eigen::VectorXd s_s, s_r;      // per-link SNR lower bounds
  Eigen::VectorXd ell_s, ell_r;  // per-slot rate hypograph values
  Eigen::VectorXd d_S, d_D;      // squared-distance upper bounds
  Eigen::VectorXd t, t_hat;      // laser efficiency chain
  double E_i = 0.0, E_e = 0.0;
  double p_tilde = 0.0, P_tilde = 0.0, t_tilde = 0.0;
  int iteration = 0;

  double surrogate_objective(const Scenario& sc) const { return E_i + sc.gamma_weight * E_e; }
};

/// Constraint tally of one subproblem instance, bucketed the way the paper's
/// complexity analysis counts: box families and the two energy prefix
/// families and the laser-product family land in "linear"; the distance
/// epigraph cones are the dim-4 bucket.
struct ConstraintCensus {
  int linear = 0;
  int soc_dim3 = 0;
  int soc_dim4 = 0;
};

struct FreezeMask {
  bool traj = false;         // q_n columns fixed at the state's values
  bool comm_powers = false;  // p_s, p_r fixed
  bool pb = false;           // P_s, t, t_hat fixed
};

struct BuildOptions {
  FreezeMask freeze;
  bool rsum_slack = false;  // feasibility-restoration mode: min slack of 8d
};

/// Variable layout of one subproblem; entries with idx < 0 are constants.
struct VarRef {
  int idx = -1;
  double val = 0.0;
};

struct Layout {
  int num_vars = 0;
  std::vector<VarRef> qx, qy, p_s, p_r, P_s, s_s, s_r, ell_s, ell_r, d_S, d_D, t, t_hat;
  VarRef E_i, E_e, p_tilde, P_tilde, t_tilde, slack;
  double value(const VarRef& v, const Eigen::VectorXd& x) const { return v.idx >= 0 ? x[v.idx] : v.val; }
};

struct SubproblemBuild {
  socp::ConicProgram program;
  ConstraintCensus census;
  Layout layout;
};

struct CccpOptions {
  double tol = 1e-5;        // relative improvement threshold
  int stall_iters = 3;      // consecutive small improvements to stop
  int max_iters = 500;
  double solver_tol = 1e-8;
  int solver_max_iters = 100;
};

struct IterRecord {
  int iteration = 0;
  double surrogate = 0.0;  // E_i + gamma E_e
  double objective = 0.0;  // weighted objective of the mapped physical point
  double max_violation = 0.0;
  FeasibilityReport report;
};

struct SolveResult {
  Trajectory traj;
  PowerSchedule pw;
  SolutionMetrics metrics;
  std::vector<IterRecord> history;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

/// Feasible start: straight-line constant-speed trajectory, source at full
/// power, relay filled causally, PB at its minimum; restoration pass if the
/// minimum sum-rate cannot be met directly.
CccpState initialize(const Scenario& sc, const CccpOptions& opts = {});

/// Same construction from a caller-provided trajectory/power seed.
CccpState initialize_from(const Scenario& sc, const Trajectory& traj, const PowerSchedule& pw,
                          const CccpOptions& opts = {});

SubproblemBuild build_subproblem(const CccpState& state, const Scenario& sc,
                                 const BuildOptions& opts = {});

/// One majorize-maximize step; throws std::runtime_error with diagnostics when
/// the conic solver cannot certify its subproblem.
CccpState iterate(const CccpState& state, const Scenario& sc, const CccpOptions& opts = {});

/// Physical deliverable of a state: powers tightened onto the model rates so
/// the Eq. 8 checks hold at every iterate.
void to_solution(const CccpState& state, const Scenario& sc, Trajectory& traj, PowerSchedule& pw);

SolveResult solve(const Scenario& sc, const CccpOptions& opts = {});
SolveResult solve_from(const Scenario& sc, const CccpState& start, const CccpOptions& opts = {});

}  // namespace lasrelay::cccp
