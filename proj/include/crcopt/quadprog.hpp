// Primal active-set solver for small strictly convex quadratic programs:
//
//     min  1/2 x^T H x + g^T x
//     s.t. A x <= b,   E x = d,   lower <= x <= upper
//
// H must be symmetric positive definite (the caller enforces this; the
// solver checks symmetry). A feasible start is found with the LP kernel,
// after which the classic working-set iteration applies: solve the
// equality-constrained subproblem on the working set via a null-space
// reduction, step to the nearest blocking constraint, and drop constraints
// with negative multipliers until the KKT conditions hold.

#pragma once

#include <Eigen/Dense>

#include "crcopt/linprog.hpp"

namespace crcopt {

enum class QpStatus {
  Optimal,
  Infeasible,
  IterationLimit,
};

const char* to_string(QpStatus status);

struct QuadraticProgram {
  Eigen::MatrixXd hessian;   // symmetric positive definite
  Eigen::VectorXd linear;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;     // entries may be -infinity
  Eigen::VectorXd upper;     // entries may be +infinity

  static QuadraticProgram with_dims(Eigen::Index num_vars);
  Eigen::Index num_vars() const { return linear.size(); }
  void add_ub_row(const Eigen::VectorXd& row, double rhs);
  void validate() const;  // throws std::invalid_argument (asymmetry, dims)
};

struct QpOptions {
  double constraint_tol = 1e-9;
  double multiplier_tol = 1e-9;
  long max_iterations = 500;
};

struct QpResult {
  QpStatus status = QpStatus::IterationLimit;
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd mult_ub;     // one per a_ub row, >= 0 at the optimum
  Eigen::VectorXd mult_eq;     // one per a_eq row, sign free
  Eigen::VectorXd mult_lower;  // one per variable, >= 0
  Eigen::VectorXd mult_upper;  // one per variable, >= 0
  double kkt_residual = 0.0;
  long iterations = 0;
};

QpResult qp_solve(const QuadraticProgram& qp, const QpOptions& options = {});

}  // namespace crcopt
