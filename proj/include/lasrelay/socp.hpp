#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

namespace lasrelay::socp {

enum class RowSense { LE, GE, EQ };

/// One scalar linear constraint a^T x (sense) rhs.
struct LinearRow {
  Eigen::VectorXd a;
  double rhs = 0.0;
  RowSense sense = RowSense::LE;
};

/// ||u|| <= t with (t, u) = A x + b; row 0 of A/b is t, rows 1.. are u.
struct SocConstraint {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  int dim() const { return static_cast<int>(A.rows()); }
};

/// Standard-form conic program: maximize objective^T x subject to linear
/// rows, second-order cones, and variable bounds (+-inf allowed).
struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd objective;
  std::vector<LinearRow> rows;
  std::vector<SocConstraint> socs;
  Eigen::VectorXd lb, ub;

  void validate() const;  // throws std::invalid_argument on malformed input
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit };

const char* to_string(SolveStatus s);

struct ConicSolution {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd x;
  double obj = 0.0;                       // objective^T x
  Eigen::VectorXd row_duals;              // one per linear row (>= 0 for LE/GE)
  std::vector<Eigen::VectorXd> soc_duals; // one per cone, in K*
  Eigen::VectorXd bound_duals_lo, bound_duals_hi;
  double primal_residual = 0.0, dual_residual = 0.0, gap = 0.0;
  int iterations = 0;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iters = 100;
};

/// Primal-dual interior-point solve (Mehrotra predictor-corrector with
/// Nesterov-Todd scaling on a homogeneous self-dual embedding).
ConicSolution solve(const ConicProgram& cp, const SolveOptions& opts = {});

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

/// Standard conic KKT residual norms of a (solution, dual) pair.
KktResiduals kkt_residuals(const ConicProgram& cp, const ConicSolution& sol);

/// Plain-text interchange dump (round-trippable), for cross-validation.
void write_conic_text(const ConicProgram& cp, std::ostream& os);
ConicProgram read_conic_text(std::istream& is);

}  // namespace lasrelay::socp
