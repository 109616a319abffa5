#include "crcopt/sqp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace crcopt {

namespace {

constexpr double kLn2 = 0.6931471805599453;

Eigen::VectorXd power_part(const RateAllocationProblem& pb, const Eigen::VectorXd& x) {
  return x.tail(pb.power_dim());
}

// Golden-section maximization of a unimodal function on [lo, hi].
double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

}  // namespace

Eigen::VectorXd objective_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  const int off = pb.power_offset();
  Eigen::VectorXd power = power_part(pb, x);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(pb.decision_dim());
  grad.head(num_q).setConstant(-1.0);

  const double scale = pb.bandwidth_hz / kLn2;
  for (int q = 0; q < num_q; ++q) {
    double full = common_denominator(pb, q, power);       // includes own power
    double interference = full - pb.channels.h_c[q] * power[pb.p_index(q)];
    // private_rate_q = B log2(full / interference); p0 does not appear.
    for (int j = 0; j < num_q; ++j) {
      double dfull = pb.channels.h_c[q];
      double dint = j == q ? 0.0 : pb.channels.h_c[q];
      grad[off + pb.p_index(j)] -= scale * (dfull / full - dint / interference);
    }
    for (int k = 0; k < num_k; ++k) {
      double g = pb.channels.g_rc(k, q);
      grad[off + pb.pr_index(k)] -= scale * (g / full - g / interference);
    }
  }
  return grad;
}

Eigen::VectorXd common_cap_values(const RateAllocationProblem& pb, const Eigen::VectorXd& x) {
  const int num_q = pb.num_cus();
  Eigen::VectorXd power = power_part(pb, x);
  double total_share = x.head(num_q).sum();
  Eigen::VectorXd values(num_q);
  for (int q = 0; q < num_q; ++q) values[q] = total_share - common_rate(pb, q, power);
  return values;
}

Eigen::VectorXd min_rate_values(const RateAllocationProblem& pb, const Eigen::VectorXd& x) {
  const int num_q = pb.num_cus();
  Eigen::VectorXd power = power_part(pb, x);
  Eigen::VectorXd values(num_q);
  for (int q = 0; q < num_q; ++q) {
    values[q] = pb.min_rate_bps[q] - x[pb.a_index(q)] - private_rate(pb, q, power);
  }
  return values;
}

Eigen::VectorXd common_cap_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x, int q) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  const int off = pb.power_offset();
  Eigen::VectorXd power = power_part(pb, x);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(pb.decision_dim());
  grad.head(num_q).setOnes();

  double denom = common_denominator(pb, q, power);
  double total = denom + pb.channels.h_c[q] * power[RateAllocationProblem::p0_index()];
  const double scale = pb.bandwidth_hz / kLn2;
  grad[off + RateAllocationProblem::p0_index()] -= scale * pb.channels.h_c[q] / total;
  for (int j = 0; j < num_q; ++j) {
    double h = pb.channels.h_c[q];
    grad[off + pb.p_index(j)] -= scale * (h / total - h / denom);
  }
  for (int k = 0; k < num_k; ++k) {
    double g = pb.channels.g_rc(k, q);
    grad[off + pb.pr_index(k)] -= scale * (g / total - g / denom);
  }
  return grad;
}

Eigen::VectorXd min_rate_gradient(const RateAllocationProblem& pb, const Eigen::VectorXd& x, int q) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  const int off = pb.power_offset();
  Eigen::VectorXd power = power_part(pb, x);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(pb.decision_dim());
  grad[pb.a_index(q)] = -1.0;

  double full = common_denominator(pb, q, power);
  double interference = full - pb.channels.h_c[q] * power[pb.p_index(q)];
  const double scale = pb.bandwidth_hz / kLn2;
  for (int j = 0; j < num_q; ++j) {
    double dfull = pb.channels.h_c[q];
    double dint = j == q ? 0.0 : pb.channels.h_c[q];
    grad[off + pb.p_index(j)] -= scale * (dfull / full - dint / interference);
  }
  for (int k = 0; k < num_k; ++k) {
    double g = pb.channels.g_rc(k, q);
    grad[off + pb.pr_index(k)] -= scale * (g / full - g / interference);
  }
  return grad;
}

AffineConstraints linearize_constraints(const RateAllocationProblem& pb, const Eigen::VectorXd& x) {
  const int num_q = pb.num_cus();
  const int dim = pb.decision_dim();
  const int off = pb.power_offset();
  Eigen::VectorXd power = power_part(pb, x);

  PowerPolytope poly = linearized_radar_constraints(pb);
  const Eigen::Index linear_rows = poly.a_ub.rows();

  AffineConstraints out;
  out.num_nonlinear = 2 * num_q;
  out.a_ub = Eigen::MatrixXd::Zero(2 * num_q + linear_rows, dim);
  out.b_ub = Eigen::VectorXd::Zero(2 * num_q + linear_rows);

  Eigen::VectorXd cap_values = common_cap_values(pb, x);
  Eigen::VectorXd rate_values = min_rate_values(pb, x);
  for (int q = 0; q < num_q; ++q) {
    out.a_ub.row(q) = common_cap_gradient(pb, x, q);
    out.b_ub[q] = -cap_values[q];
    out.a_ub.row(num_q + q) = min_rate_gradient(pb, x, q);
    out.b_ub[num_q + q] = -rate_values[q];
  }
  // Linear rows of the original problem, shifted to the step variable:
  // A (p + s_p) <= b  =>  A s_p <= b - A p.
  for (Eigen::Index i = 0; i < linear_rows; ++i) {
    out.a_ub.row(2 * num_q + i).segment(off, pb.power_dim()) = poly.a_ub.row(i);
    out.b_ub[2 * num_q + i] = poly.b_ub[i] - poly.a_ub.row(i).dot(power);
  }
  return out;
}

Eigen::MatrixXd bfgs_update(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& v, double curvature_threshold) {
  double u_norm = u.lpNorm<Eigen::Infinity>();
  if (!(u_norm > 0.0)) return hessian;
  Eigen::VectorXd hu = hessian * u;
  double uhu = u.dot(hu);
  if (!(uhu > 0.0)) return hessian;

  Eigen::VectorXd v_eff = v;
  double vu = v.dot(u);
  if (vu < curvature_threshold * uhu) {
    double theta = (1.0 - curvature_threshold) * uhu / (uhu - vu);
    v_eff = theta * v + (1.0 - theta) * hu;
    vu = v_eff.dot(u);
  }
  Eigen::MatrixXd updated = hessian - (hu * hu.transpose()) / uhu + (v_eff * v_eff.transpose()) / vu;
  updated = 0.5 * (updated + updated.transpose());

  // Damping keeps the update positive definite in exact arithmetic; guard
  // the numerical floor so long update sequences cannot drift singular.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(updated);
  double max_eig = std::max(eig.eigenvalues().maxCoeff(), 1.0);
  double min_eig = eig.eigenvalues().minCoeff();
  double floor = 1e-12 * max_eig;
  if (min_eig < floor) {
    updated += (floor - min_eig) * Eigen::MatrixXd::Identity(updated.rows(), updated.cols());
  }
  return updated;
}

double LineSearchProblem::objective(double alpha) const {
  double total = (a_base.array() + alpha * a_slope.array()).sum();
  for (Eigen::Index q = 0; q < v.size(); ++q) {
    double num = alpha * v[q] + w[q];
    double den = alpha * vp[q] + wp[q];
    if (!(num > 0.0) || !(den > 0.0)) return -std::numeric_limits<double>::infinity();
    total += bandwidth * std::log2(num / den);
  }
  return total;
}

Eigen::VectorXd LineSearchProblem::multiplier_update(double alpha) const {
  Eigen::VectorXd beta(v.size());
  for (Eigen::Index q = 0; q < v.size(); ++q) {
    beta[q] = std::sqrt(std::max(alpha * v[q] + w[q], 0.0)) / (alpha * vp[q] + wp[q]);
  }
  return beta;
}

double LineSearchProblem::transformed(double alpha, const Eigen::VectorXd& beta) const {
  double total = (a_base.array() + alpha * a_slope.array()).sum();
  for (Eigen::Index q = 0; q < v.size(); ++q) {
    double num = alpha * v[q] + w[q];
    if (num < 0.0) return -std::numeric_limits<double>::infinity();
    double inner = 2.0 * beta[q] * std::sqrt(num) - beta[q] * beta[q] * (alpha * vp[q] + wp[q]);
    if (!(inner > 0.0)) return -std::numeric_limits<double>::infinity();
    total += bandwidth * std::log2(inner);
  }
  return total;
}

LineSearchProblem build_line_search(const RateAllocationProblem& pb, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& s) {
  if (s.lpNorm<Eigen::Infinity>() == 0.0) {
    throw std::invalid_argument("line search: zero direction");
  }
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  const int off = pb.power_offset();

  LineSearchProblem lsp;
  lsp.bandwidth = pb.bandwidth_hz;
  lsp.a_base = x.head(num_q);
  lsp.a_slope = s.head(num_q);
  lsp.v = Eigen::VectorXd::Zero(num_q);
  lsp.w = Eigen::VectorXd::Zero(num_q);
  lsp.vp = Eigen::VectorXd::Zero(num_q);
  lsp.wp = Eigen::VectorXd::Zero(num_q);

  for (int q = 0; q < num_q; ++q) {
    double h = pb.channels.h_c[q];
    double v_all = 0.0, w_all = 0.0;
    for (int j = 0; j < num_q; ++j) {
      v_all += h * s[off + pb.p_index(j)];
      w_all += h * x[off + pb.p_index(j)];
    }
    for (int k = 0; k < num_k; ++k) {
      double g = pb.channels.g_rc(k, q);
      v_all += g * s[off + pb.pr_index(k)];
      w_all += g * x[off + pb.pr_index(k)];
    }
    w_all += pb.channels.noise_cu_w[q];
    lsp.v[q] = v_all;
    lsp.w[q] = w_all;
    lsp.vp[q] = v_all - h * s[off + pb.p_index(q)];
    lsp.wp[q] = w_all - h * x[off + pb.p_index(q)];
  }
  return lsp;
}

FpResult fp_line_search(const LineSearchProblem& lsp, double fp_tol, double alpha_min,
                        double alpha_max) {
  FpResult result;
  double alpha = std::clamp(1.0, alpha_min, alpha_max);
  double objective = lsp.objective(alpha);
  if (!std::isfinite(objective)) {
    alpha = alpha_min;
    objective = lsp.objective(alpha);
  }
  result.objective_trace.push_back(objective);

  const double gs_tol = std::max(1e-14, 0.1 * fp_tol);
  for (int iter = 0; iter < 100; ++iter) {
    ++result.iterations;
    Eigen::VectorXd beta = lsp.multiplier_update(alpha);
    auto surrogate = [&](double a) { return lsp.transformed(a, beta); };
    double candidate = golden_max(surrogate, alpha_min, alpha_max, gs_tol);
    if (surrogate(candidate) < surrogate(alpha)) candidate = alpha;
    double candidate_objective = lsp.objective(candidate);
    if (candidate_objective < objective) {
      candidate = alpha;
      candidate_objective = objective;
    }
    result.objective_trace.push_back(candidate_objective);
    double moved = std::abs(candidate - alpha);
    alpha = candidate;
    objective = candidate_objective;
    if (moved <= fp_tol) break;
  }
  result.alpha = alpha;
  return result;
}

const char* to_string(SqpStatus status) {
  switch (status) {
    case SqpStatus::Converged: return "converged";
    case SqpStatus::IterationLimit: return "iteration_limit";
    case SqpStatus::Stalled: return "stalled";
    case SqpStatus::InfeasibleInit: return "infeasible";
  }
  return "unknown";
}

Allocation default_initial_allocation(const RateAllocationProblem& pb) {
  PowerPolytope poly = linearized_radar_constraints(pb);
  FeasibilityWitness witness = lp_feasible(poly.to_lp());
  if (!witness.feasible) {
    throw std::runtime_error("no feasible power point: radar constraints unsatisfiable");
  }
  Allocation alloc = Allocation::from_parts(Eigen::VectorXd::Zero(pb.num_cus()), witness.point);
  Eigen::VectorXd power = alloc.power_vector();
  for (int q = 0; q < pb.num_cus(); ++q) {
    alloc.a[q] = std::max(0.0, pb.min_rate_bps[q] - private_rate(pb, q, power));
  }
  return alloc;
}

namespace {

struct QpStep {
  bool ok = false;
  Eigen::VectorXd step;
  Eigen::VectorXd row_multipliers;
  Eigen::VectorXd lower_multipliers;
};

QpStep solve_subproblem(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& grad,
                        const AffineConstraints& rows, const Eigen::VectorXd& x,
                        double elastic_penalty) {
  const Eigen::Index n = grad.size();
  QpStep out;

  QuadraticProgram qp = QuadraticProgram::with_dims(n);
  qp.hessian = hessian;
  qp.linear = grad;
  qp.a_ub = rows.a_ub;
  qp.b_ub = rows.b_ub;
  qp.lower = -x;
  QpResult res = qp_solve(qp);
  if (res.status == QpStatus::Optimal) {
    out.ok = true;
    out.step = res.x;
    out.row_multipliers = res.mult_ub;
    out.lower_multipliers = res.mult_lower;
    return out;
  }

  // Elastic relaxation: one slack per linearized rate row, large linear
  // penalty plus a small quadratic term to keep the Hessian positive
  // definite.
  const Eigen::Index relaxed = rows.num_nonlinear;
  const Eigen::Index total = n + relaxed;
  QuadraticProgram elastic = QuadraticProgram::with_dims(total);
  elastic.hessian.setZero();
  elastic.hessian.topLeftCorner(n, n) = hessian;
  elastic.hessian.bottomRightCorner(relaxed, relaxed) = 1e-6 * Eigen::MatrixXd::Identity(relaxed, relaxed);
  elastic.linear.setZero();
  elastic.linear.head(n) = grad;
  elastic.linear.tail(relaxed).setConstant(elastic_penalty);
  elastic.a_ub = Eigen::MatrixXd::Zero(rows.a_ub.rows(), total);
  elastic.a_ub.leftCols(n) = rows.a_ub;
  for (Eigen::Index i = 0; i < relaxed; ++i) elastic.a_ub(i, n + i) = -1.0;
  elastic.b_ub = rows.b_ub;
  elastic.lower.head(n) = -x;
  elastic.lower.tail(relaxed).setZero();
  QpResult relaxed_res = qp_solve(elastic);
  if (relaxed_res.status != QpStatus::Optimal) return out;

  out.ok = true;
  out.step = relaxed_res.x.head(n);
  out.row_multipliers = relaxed_res.mult_ub;
  out.lower_multipliers = relaxed_res.mult_lower.head(n);
  return out;
}

// l1 exact-penalty merit: minimization objective plus weighted violation of
// every constraint. The line-search proposal is accepted only if it does not
// increase this value; otherwise the step backtracks.
double merit_value(const RateAllocationProblem& pb, const PowerPolytope& poly,
                   const Eigen::VectorXd& x, double penalty) {
  Allocation alloc = Allocation::from_decision(x, pb.num_cus(), pb.num_radars());
  double value = -objective_value(pb, alloc);
  double violation = 0.0;
  Eigen::VectorXd caps = common_cap_values(pb, x);
  Eigen::VectorXd rates = min_rate_values(pb, x);
  for (Eigen::Index i = 0; i < caps.size(); ++i) violation += std::max(0.0, caps[i]);
  for (Eigen::Index i = 0; i < rates.size(); ++i) violation += std::max(0.0, rates[i]);
  Eigen::VectorXd power = x.tail(pb.power_dim());
  for (Eigen::Index i = 0; i < poly.a_ub.rows(); ++i) {
    violation += std::max(0.0, poly.a_ub.row(i).dot(power) - poly.b_ub[i]);
  }
  violation += std::max(0.0, -x.minCoeff());
  return value + penalty * violation;
}

double kkt_residual_at(const RateAllocationProblem& pb, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& grad, const AffineConstraints& rows,
                       const QpStep& qp) {
  Eigen::VectorXd stationarity = grad;
  stationarity += rows.a_ub.transpose() * qp.row_multipliers;
  stationarity -= qp.lower_multipliers;
  double stat = stationarity.lpNorm<Eigen::Infinity>();

  // Complementarity against the true constraint values at x (rows store
  // b_i = -c_i(x) for the nonlinear part and slack for the linear part).
  double comp = 0.0;
  for (Eigen::Index i = 0; i < rows.b_ub.size(); ++i) {
    comp = std::max(comp, std::abs(qp.row_multipliers[i] * rows.b_ub[i]));
  }
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    comp = std::max(comp, std::abs(qp.lower_multipliers[j] * x[j]));
  }
  (void)pb;
  return std::max(stat, comp);
}

}  // namespace

SqpReport sqp_solve(const RateAllocationProblem& pb, const SqpOptions& options) {
  Allocation init;
  try {
    init = default_initial_allocation(pb);
  } catch (const std::runtime_error&) {
    SqpReport report;
    report.status = SqpStatus::InfeasibleInit;
    report.allocation = Allocation::zeros(pb.num_cus(), pb.num_radars());
    report.feasibility = check_feasibility(pb, report.allocation);
    return report;
  }
  return sqp_solve(pb, init, options);
}

SqpReport sqp_solve(const RateAllocationProblem& pb, const Allocation& init,
                    const SqpOptions& options) {
  pb.validate();
  const double rate_scale = pb.bandwidth_hz;
  RateAllocationProblem scaled = pb.rate_normalized();
  const int num_q = scaled.num_cus();
  const int dim = scaled.decision_dim();

  Eigen::VectorXd x = init.decision_vector();
  x.head(num_q) /= rate_scale;
  x = x.cwiseMax(0.0);

  SqpReport report;
  report.state.hessian = Eigen::MatrixXd::Identity(dim, dim);
  report.status = SqpStatus::IterationLimit;

  const PowerPolytope poly = linearized_radar_constraints(scaled);
  double penalty = 1.0;
  Eigen::VectorXd grad = objective_gradient(scaled, x);
  for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
    AffineConstraints rows = linearize_constraints(scaled, x);
    QpStep qp = solve_subproblem(report.state.hessian, grad, rows, x, options.elastic_penalty);
    if (!qp.ok) {
      report.status = SqpStatus::Stalled;
      break;
    }

    double kkt = kkt_residual_at(scaled, x, grad, rows, qp);
    if (qp.step.lpNorm<Eigen::Infinity>() <= options.step_tol) {
      report.state.multipliers = qp.row_multipliers;
      report.kkt_residual = kkt;
      report.status = SqpStatus::Converged;
      report.trace.push_back({iteration, -0.0, 0.0, kkt});
      Allocation current = Allocation::from_decision(x, num_q, scaled.num_radars());
      report.trace.back().objective_bps = objective_value(scaled, current) * rate_scale;
      break;
    }

    LineSearchProblem lsp = build_line_search(scaled, x, qp.step);
    FpResult fp = fp_line_search(lsp, options.fp_tol, options.alpha_min, options.alpha_max);

    // Accept the proposal only if the exact-penalty merit does not grow;
    // the QP direction is a merit descent direction once the penalty
    // dominates the multipliers, so backtracking always terminates.
    penalty = std::max({penalty,
                        2.0 * qp.row_multipliers.lpNorm<Eigen::Infinity>() + 1.0,
                        2.0 * qp.lower_multipliers.lpNorm<Eigen::Infinity>() + 1.0});
    double merit_base = merit_value(scaled, poly, x, penalty);
    double alpha = fp.alpha;
    while (alpha > options.alpha_min) {
      Eigen::VectorXd probe = (x + alpha * qp.step).cwiseMax(0.0);
      if (merit_value(scaled, poly, probe, penalty) <= merit_base + options.fp_tol) break;
      alpha *= 0.5;
    }
    Eigen::VectorXd x_next = (x + alpha * qp.step).cwiseMax(0.0);
    Eigen::VectorXd grad_next = objective_gradient(scaled, x_next);

    double step_norm = (x_next - x).lpNorm<Eigen::Infinity>();
    report.state.hessian =
        bfgs_update(report.state.hessian, x_next - x, grad_next - grad, options.curvature_threshold);
    report.state.multipliers = qp.row_multipliers;
    report.kkt_residual = kkt;

    Allocation current = Allocation::from_decision(x_next, num_q, scaled.num_radars());
    report.trace.push_back({iteration, objective_value(scaled, current) * rate_scale, step_norm, kkt});

    x = x_next;
    grad = grad_next;
    report.state.iteration = iteration + 1;
    if (step_norm <= options.step_tol) {
      report.status = SqpStatus::Converged;
      break;
    }
  }

  Allocation final_alloc = Allocation::from_decision(x, num_q, scaled.num_radars());
  final_alloc.a *= rate_scale;
  report.allocation = final_alloc;
  report.objective_bps = objective_value(pb, final_alloc);
  report.feasibility = check_feasibility(pb, final_alloc);
  report.state.iterate = x;
  report.state.common_cap = min_common_rate(scaled, power_part(scaled, x));
  return report;
}

void write_trace_csv(const std::vector<SqpTracePoint>& trace, std::ostream& out) {
  out << "iter,objective,step_norm,kkt_residual\n";
  for (const SqpTracePoint& point : trace) {
    out << point.iteration << ',' << point.objective_bps << ',' << point.step_norm << ','
        << point.kkt_residual << '\n';
  }
}

}  // namespace crcopt
