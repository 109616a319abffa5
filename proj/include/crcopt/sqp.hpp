// Local solver: sequential quadratic programming with a damped BFGS
// curvature model and a fractional-programming line search.
//
// The problem is handled in minimization form, F(a, p) = -sum a_q
// - sum private_rate_q(p), over the decision vector x = [a | p0, p, pr].
// Each iteration solves a convex QP built from the BFGS matrix, the
// linearized nonlinear rate constraints and the unchanged linear rows,
// then picks the step length by maximizing the exact objective along the
// direction via the quadratic-transform alternation (closed-form multiplier
// update, one-dimensional concave solve). Iterates may be infeasible; the
// QP pulls them toward the feasible set.

#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "crcopt/model.hpp"
#include "crcopt/quadprog.hpp"

namespace crcopt {

// Gradient of the minimization objective F at the decision vector x.
Eigen::VectorXd objective_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x);

// Values of the nonlinear constraint functions at x, in <= 0 form:
//   common_cap[q] = sum a - common_rate_q(p)      (cap rows)
//   min_rate[q]   = threshold_q - a_q - private_rate_q(p)
Eigen::VectorXd common_cap_values(const RateAllocationProblem& pb, const Eigen::VectorXd& x);
Eigen::VectorXd min_rate_values(const RateAllocationProblem& pb, const Eigen::VectorXd& x);
Eigen::VectorXd common_cap_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x, int q);
Eigen::VectorXd min_rate_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x, int q);

// Affine inequality rows over the step s: the linearized nonlinear rows
// followed by the original linear rows rewritten in s. Together with
// s >= -x they define the QP subproblem's feasible set.
struct AffineConstraints {
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  int num_nonlinear = 0;  // leading rows: Q cap rows then Q min-rate rows
};

AffineConstraints linearize_constraints(const RateAllocationProblem& pb, const Eigen::VectorXd& x);

// Damped rank-two curvature update; the result stays symmetric positive
// definite for any input pair when H is.
Eigen::MatrixXd bfgs_update(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& v, double curvature_threshold = 0.2);

// One-dimensional restriction of the objective to x + alpha * s. The rate
// term of user q becomes B log2((alpha V_q + W_q) / (alpha V'_q + W'_q));
// slopes carry the direction, intercepts carry the iterate plus noise.
struct LineSearchProblem {
  Eigen::VectorXd v, w;       // common-sum numerator coefficients
  Eigen::VectorXd vp, wp;     // interference-only denominator coefficients
  Eigen::VectorXd a_base, a_slope;
  double bandwidth = 1.0;

  double objective(double alpha) const;           // exact restriction
  Eigen::VectorXd multiplier_update(double alpha) const;  // closed form
  double transformed(double alpha, const Eigen::VectorXd& beta) const;
};

// Throws std::invalid_argument when the direction is identically zero.
LineSearchProblem build_line_search(const RateAllocationProblem& pb, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& s);

struct FpResult {
  double alpha = 0.0;
  std::vector<double> objective_trace;  // one entry per alternation, nondecreasing
  int iterations = 0;
};

FpResult fp_line_search(const LineSearchProblem& lsp, double fp_tol = 1e-6,
                        double alpha_min = 1e-12, double alpha_max = 1.0);

struct SqpOptions {
  double step_tol = 1e-6;        // convergence: ||x_{l+1} - x_l||_inf
  int max_iterations = 500;
  double fp_tol = 1e-6;
  double alpha_min = 1e-12;
  double alpha_max = 1.0;
  double curvature_threshold = 0.2;
  double elastic_penalty = 1e6;
};

enum class SqpStatus {
  Converged,
  IterationLimit,
  Stalled,          // QP subproblem unsolvable even after relaxation
  InfeasibleInit,   // no feasible power point exists
};

const char* to_string(SqpStatus status);

struct SqpTracePoint {
  int iteration = 0;
  double objective_bps = 0.0;
  double step_norm = 0.0;
  double kkt_residual = 0.0;
};

struct SqpState {
  Eigen::VectorXd iterate;       // current [a | p]
  Eigen::MatrixXd hessian;       // BFGS matrix, symmetric PD
  double common_cap = 0.0;       // current min common rate (auxiliary cap)
  Eigen::VectorXd multipliers;   // QP-row estimates: [cap rows, rate rows, linear rows]
  int iteration = 0;
};

struct SqpReport {
  SqpStatus status = SqpStatus::Stalled;
  Allocation allocation;
  double objective_bps = 0.0;
  double kkt_residual = 0.0;
  FeasibilityReport feasibility;
  std::vector<SqpTracePoint> trace;
  SqpState state;
};

// Power part from a feasibility witness of the linear rows, common-rate
// shares topped up to the per-user thresholds.
Allocation default_initial_allocation(const RateAllocationProblem& pb);

SqpReport sqp_solve(const RateAllocationProblem& pb, const Allocation& init,
                    const SqpOptions& options = {});
SqpReport sqp_solve(const RateAllocationProblem& pb, const SqpOptions& options = {});

// CSV export of the iteration trace: iter,objective,step_norm,kkt_residual.
void write_trace_csv(const std::vector<SqpTracePoint>& trace, std::ostream& out);

}  // namespace crcopt
