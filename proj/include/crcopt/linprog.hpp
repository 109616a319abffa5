// Dense linear-programming kernel.
//
// Solves small dense problems of the form
//
//     max  c^T x
//     s.t. A x <= b,   E x = d,   lower <= x <= upper
//
// with a two-phase revised simplex using Bland's anti-cycling rule.
// Every LP in this project has at most a few dozen variables, so the
// implementation refactorizes the basis each iteration and favors
// robustness and bit-for-bit determinism over speed.

#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <stdexcept>

namespace crcopt {

enum class LpStatus {
  Optimal,
  Infeasible,
  Unbounded,
  IterationLimit,  // numerical breakdown / cycling guard, distinct from Infeasible
};

const char* to_string(LpStatus status);

struct LinearProgram {
  Eigen::VectorXd objective;  // maximized
  Eigen::MatrixXd a_ub;       // a_ub * x <= b_ub
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;       // a_eq * x == b_eq
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;      // finite
  Eigen::VectorXd upper;      // entries may be +infinity

  // Zero objective, no rows, bounds [0, +inf).
  static LinearProgram with_dims(Eigen::Index num_vars);

  Eigen::Index num_vars() const { return objective.size(); }

  void add_ub_row(const Eigen::VectorXd& row, double rhs);
  void add_eq_row(const Eigen::VectorXd& row, double rhs);

  // Throws std::invalid_argument on dimension mismatch or non-finite data.
  void validate() const;
};

struct SimplexOptions {
  double pivot_tol = 1e-10;
  double feas_tol = 1e-9;
  long max_iterations = 100000;
};

struct LpResult {
  LpStatus status = LpStatus::IterationLimit;
  Eigen::VectorXd x;      // valid when status == Optimal
  double value = 0.0;     // objective.dot(x)
  long iterations = 0;
};

LpResult lp_solve(const LinearProgram& lp, const SimplexOptions& options = {});

struct FeasibilityWitness {
  bool feasible = false;
  Eigen::VectorXd point;  // satisfies all constraints when feasible
};

// Phase-one feasibility test; the objective of `lp` is ignored.
FeasibilityWitness lp_feasible(const LinearProgram& lp, const SimplexOptions& options = {});

// Debug dump in the text LP interchange format understood by most solvers.
void write_lp_text(const LinearProgram& lp, std::ostream& out);

}  // namespace crcopt
