#include "crcopt/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace crcopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Standard-form problem: min cost^T z  s.t.  a z = b, z >= 0.
// Columns are laid out as [shifted original vars | slacks | artificials].
struct StandardForm {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd cost;        // phase-two cost
  Eigen::VectorXd col_scale;   // z_original = col_scale .* z_scaled
  Eigen::Index num_structural = 0;  // original + slack columns
  Eigen::Index first_artificial = 0;
  std::vector<Eigen::Index> basis;  // one column per row
};

enum class StepOutcome { Optimal, Unbounded, IterationLimit };

double pow2_floor(double v) {
  if (!(v > 0.0)) return 1.0;
  int e = 0;
  std::frexp(v, &e);
  return std::ldexp(1.0, e - 1);
}

// Revised simplex on the standard form: minimizes cost over the columns
// with allowed[j] == true. Bland's rule on both the entering and leaving
// choice guarantees termination in exact arithmetic.
StepOutcome run_simplex(const StandardForm& sf, const Eigen::VectorXd& cost,
                        const std::vector<bool>& allowed, const SimplexOptions& opt,
                        std::vector<Eigen::Index>& basis, long& iterations) {
  const Eigen::Index m = sf.a.rows();
  const Eigen::Index n = sf.a.cols();
  Eigen::MatrixXd basis_mat(m, m);

  while (true) {
    if (++iterations > opt.max_iterations) return StepOutcome::IterationLimit;

    for (Eigen::Index i = 0; i < m; ++i) basis_mat.col(i) = sf.a.col(basis[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis_mat);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(basis_mat.transpose());

    Eigen::VectorXd x_basic = lu.solve(sf.b);
    Eigen::VectorXd cost_basic(m);
    for (Eigen::Index i = 0; i < m; ++i) cost_basic[i] = cost[basis[i]];
    Eigen::VectorXd y = lu_t.solve(cost_basic);

    // Bland: entering column = lowest index with a negative reduced cost.
    Eigen::Index entering = -1;
    std::vector<bool> in_basis(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < m; ++i) in_basis[static_cast<size_t>(basis[i])] = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!allowed[static_cast<size_t>(j)] || in_basis[static_cast<size_t>(j)]) continue;
      double reduced = cost[j] - y.dot(sf.a.col(j));
      if (reduced < -opt.pivot_tol) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return StepOutcome::Optimal;

    Eigen::VectorXd direction = lu.solve(sf.a.col(entering));

    double best_ratio = kInf;
    Eigen::Index leaving_pos = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (direction[i] <= opt.pivot_tol) continue;
      double ratio = std::max(x_basic[i], 0.0) / direction[i];
      if (leaving_pos < 0) {
        best_ratio = ratio;
        leaving_pos = i;
        continue;
      }
      double cmp = 1e-12 * (1.0 + std::abs(best_ratio));
      if (ratio < best_ratio - cmp) {
        best_ratio = ratio;
        leaving_pos = i;
      } else if (ratio <= best_ratio + cmp && basis[i] < basis[leaving_pos]) {
        // Tie: prefer the smaller basis variable index (Bland).
        best_ratio = std::min(best_ratio, ratio);
        leaving_pos = i;
      }
    }
    if (leaving_pos < 0) return StepOutcome::Unbounded;

    basis[leaving_pos] = entering;
  }
}

Eigen::VectorXd basic_solution(const StandardForm& sf, const std::vector<Eigen::Index>& basis) {
  const Eigen::Index m = sf.a.rows();
  Eigen::MatrixXd basis_mat(m, m);
  for (Eigen::Index i = 0; i < m; ++i) basis_mat.col(i) = sf.a.col(basis[i]);
  Eigen::VectorXd x_basic = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_mat).solve(sf.b);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(sf.a.cols());
  for (Eigen::Index i = 0; i < m; ++i) z[basis[i]] = std::max(x_basic[i], 0.0);
  return z;
}

// Builds the standard form with row/column equilibration by powers of two.
StandardForm build_standard_form(const LinearProgram& lp) {
  const Eigen::Index n = lp.num_vars();
  const Eigen::Index m_ub = lp.a_ub.rows();
  const Eigen::Index m_eq = lp.a_eq.rows();

  std::vector<Eigen::Index> bounded;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(lp.upper[j])) bounded.push_back(j);
  }
  const Eigen::Index m_up = static_cast<Eigen::Index>(bounded.size());
  const Eigen::Index m = m_ub + m_up + m_eq;
  const Eigen::Index num_slack = m_ub + m_up;

  StandardForm sf;
  sf.num_structural = n + num_slack;
  sf.a = Eigen::MatrixXd::Zero(m, sf.num_structural);
  sf.b = Eigen::VectorXd::Zero(m);

  // Shift variables so that z = x - lower >= 0.
  for (Eigen::Index i = 0; i < m_ub; ++i) {
    sf.a.row(i).head(n) = lp.a_ub.row(i);
    sf.a(i, n + i) = 1.0;
    sf.b[i] = lp.b_ub[i] - lp.a_ub.row(i).dot(lp.lower);
  }
  for (Eigen::Index i = 0; i < m_up; ++i) {
    Eigen::Index row = m_ub + i;
    sf.a(row, bounded[static_cast<size_t>(i)]) = 1.0;
    sf.a(row, n + m_ub + i) = 1.0;
    sf.b[row] = lp.upper[bounded[static_cast<size_t>(i)]] - lp.lower[bounded[static_cast<size_t>(i)]];
  }
  for (Eigen::Index i = 0; i < m_eq; ++i) {
    Eigen::Index row = m_ub + m_up + i;
    sf.a.row(row).head(n) = lp.a_eq.row(i);
    sf.b[row] = lp.b_eq[i] - lp.a_eq.row(i).dot(lp.lower);
  }

  // Row equilibration.
  for (Eigen::Index i = 0; i < m; ++i) {
    double scale = pow2_floor(sf.a.row(i).cwiseAbs().maxCoeff());
    sf.a.row(i) /= scale;
    sf.b[i] /= scale;
  }
  // Column equilibration on the original variables only.
  sf.col_scale = Eigen::VectorXd::Ones(sf.num_structural);
  for (Eigen::Index j = 0; j < n; ++j) {
    double mag = m > 0 ? sf.a.col(j).cwiseAbs().maxCoeff() : 1.0;
    if (mag > 0.0) {
      double scale = 1.0 / pow2_floor(mag);
      sf.col_scale[j] = scale;
      sf.a.col(j) *= scale;
    }
  }

  // Make right-hand sides nonnegative, then seed the basis with slacks
  // where possible and artificials elsewhere.
  std::vector<Eigen::Index> needs_artificial;
  sf.basis.assign(static_cast<size_t>(m), -1);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sf.b[i] < 0.0) {
      sf.a.row(i) = -sf.a.row(i);
      sf.b[i] = -sf.b[i];
    }
    if (i < num_slack && sf.a(i, n + i) > 0.0) {
      sf.basis[static_cast<size_t>(i)] = n + i;
    } else {
      needs_artificial.push_back(i);
    }
  }

  sf.first_artificial = sf.num_structural;
  if (!needs_artificial.empty()) {
    sf.a.conservativeResize(Eigen::NoChange, sf.num_structural + static_cast<Eigen::Index>(needs_artificial.size()));
    sf.a.rightCols(static_cast<Eigen::Index>(needs_artificial.size())).setZero();
    for (size_t k = 0; k < needs_artificial.size(); ++k) {
      Eigen::Index col = sf.first_artificial + static_cast<Eigen::Index>(k);
      sf.a(needs_artificial[k], col) = 1.0;
      sf.basis[static_cast<size_t>(needs_artificial[k])] = col;
    }
  }

  sf.cost = Eigen::VectorXd::Zero(sf.a.cols());
  for (Eigen::Index j = 0; j < n; ++j) sf.cost[j] = -lp.objective[j] * sf.col_scale[j];
  return sf;
}

// After a successful phase one, pivot remaining artificial variables out of
// the basis; rows that cannot be pivoted are redundant and get removed.
void drive_out_artificials(StandardForm& sf, const SimplexOptions& opt) {
  const Eigen::Index m = sf.a.rows();
  std::vector<bool> drop_row(static_cast<size_t>(m), false);
  bool any_drop = false;

  Eigen::MatrixXd basis_mat(m, m);
  for (Eigen::Index i = 0; i < m; ++i) basis_mat.col(i) = sf.a.col(sf.basis[static_cast<size_t>(i)]);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(basis_mat.transpose());

  for (Eigen::Index i = 0; i < m; ++i) {
    if (sf.basis[static_cast<size_t>(i)] < sf.first_artificial) continue;
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(m);
    unit[i] = 1.0;
    Eigen::VectorXd row_of_inverse = lu_t.solve(unit);
    Eigen::Index pivot_col = -1;
    for (Eigen::Index j = 0; j < sf.first_artificial; ++j) {
      bool in_basis = false;
      for (Eigen::Index r = 0; r < m; ++r) {
        if (sf.basis[static_cast<size_t>(r)] == j) { in_basis = true; break; }
      }
      if (in_basis) continue;
      if (std::abs(row_of_inverse.dot(sf.a.col(j))) > opt.pivot_tol) { pivot_col = j; break; }
    }
    if (pivot_col >= 0) {
      sf.basis[static_cast<size_t>(i)] = pivot_col;
      for (Eigen::Index r = 0; r < m; ++r) basis_mat.col(r) = sf.a.col(sf.basis[static_cast<size_t>(r)]);
      lu_t = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_mat.transpose());
    } else {
      drop_row[static_cast<size_t>(i)] = true;
      any_drop = true;
    }
  }

  if (!any_drop) return;
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (drop_row[static_cast<size_t>(i)]) continue;
    sf.a.row(kept) = sf.a.row(i);
    sf.b[kept] = sf.b[i];
    sf.basis[static_cast<size_t>(kept)] = sf.basis[static_cast<size_t>(i)];
    ++kept;
  }
  sf.a.conservativeResize(kept, Eigen::NoChange);
  sf.b.conservativeResize(kept);
  sf.basis.resize(static_cast<size_t>(kept));
}

struct SolveInternal {
  LpStatus status = LpStatus::IterationLimit;
  Eigen::VectorXd x;
  long iterations = 0;
};

SolveInternal solve_internal(const LinearProgram& lp, const SimplexOptions& opt, bool phase_one_only) {
  lp.validate();
  SolveInternal out;
  StandardForm sf = build_standard_form(lp);
  const Eigen::Index n = lp.num_vars();

  if (sf.a.rows() == 0) {
    // No rows at all: only lower bounds constrain the variables.
    if (!phase_one_only) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (lp.objective[j] > opt.pivot_tol) {
          out.status = LpStatus::Unbounded;
          return out;
        }
      }
    }
    out.x = lp.lower;
    out.status = LpStatus::Optimal;
    return out;
  }

  long iterations = 0;
  if (sf.a.cols() > sf.first_artificial) {
    Eigen::VectorXd phase_one_cost = Eigen::VectorXd::Zero(sf.a.cols());
    phase_one_cost.tail(sf.a.cols() - sf.first_artificial).setOnes();
    std::vector<bool> allowed(static_cast<size_t>(sf.a.cols()), true);
    StepOutcome rc = run_simplex(sf, phase_one_cost, allowed, opt, sf.basis, iterations);
    out.iterations = iterations;
    if (rc == StepOutcome::IterationLimit) return out;
    Eigen::VectorXd z = basic_solution(sf, sf.basis);
    double infeasibility = z.tail(sf.a.cols() - sf.first_artificial).sum();
    if (infeasibility > opt.feas_tol) {
      out.status = LpStatus::Infeasible;
      return out;
    }
    drive_out_artificials(sf, opt);
  }

  if (!phase_one_only) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(sf.a.cols());
    cost.head(sf.cost.size()) = sf.cost;
    std::vector<bool> allowed(static_cast<size_t>(sf.a.cols()), true);
    for (Eigen::Index j = sf.first_artificial; j < sf.a.cols(); ++j) allowed[static_cast<size_t>(j)] = false;
    StepOutcome rc = run_simplex(sf, cost, allowed, opt, sf.basis, iterations);
    out.iterations = iterations;
    if (rc == StepOutcome::IterationLimit) return out;
    if (rc == StepOutcome::Unbounded) {
      out.status = LpStatus::Unbounded;
      return out;
    }
  }

  Eigen::VectorXd z = basic_solution(sf, sf.basis);
  out.x = lp.lower + (z.head(n).array() * sf.col_scale.head(n).array()).matrix();
  out.iterations = iterations;

  // Verify the recovered point; tiny-pivot drift shows up here and is
  // reported as a breakdown rather than a wrong answer.
  for (Eigen::Index i = 0; i < lp.a_ub.rows(); ++i) {
    double lhs = lp.a_ub.row(i).dot(out.x);
    double scale = 1.0 + std::abs(lp.b_ub[i]) + lp.a_ub.row(i).cwiseAbs().dot(out.x.cwiseAbs());
    if (lhs - lp.b_ub[i] > 1e-7 * scale) return out;
  }
  for (Eigen::Index i = 0; i < lp.a_eq.rows(); ++i) {
    double lhs = lp.a_eq.row(i).dot(out.x);
    double scale = 1.0 + std::abs(lp.b_eq[i]) + lp.a_eq.row(i).cwiseAbs().dot(out.x.cwiseAbs());
    if (std::abs(lhs - lp.b_eq[i]) > 1e-7 * scale) return out;
  }
  out.status = LpStatus::Optimal;
  return out;
}

}  // namespace

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

LinearProgram LinearProgram::with_dims(Eigen::Index num_vars) {
  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(num_vars);
  lp.a_ub = Eigen::MatrixXd::Zero(0, num_vars);
  lp.b_ub = Eigen::VectorXd::Zero(0);
  lp.a_eq = Eigen::MatrixXd::Zero(0, num_vars);
  lp.b_eq = Eigen::VectorXd::Zero(0);
  lp.lower = Eigen::VectorXd::Zero(num_vars);
  lp.upper = Eigen::VectorXd::Constant(num_vars, kInf);
  return lp;
}

void LinearProgram::add_ub_row(const Eigen::VectorXd& row, double rhs) {
  if (row.size() != num_vars()) throw std::invalid_argument("lp: row dimension mismatch");
  a_ub.conservativeResize(a_ub.rows() + 1, num_vars());
  a_ub.row(a_ub.rows() - 1) = row;
  b_ub.conservativeResize(b_ub.size() + 1);
  b_ub[b_ub.size() - 1] = rhs;
}

void LinearProgram::add_eq_row(const Eigen::VectorXd& row, double rhs) {
  if (row.size() != num_vars()) throw std::invalid_argument("lp: row dimension mismatch");
  a_eq.conservativeResize(a_eq.rows() + 1, num_vars());
  a_eq.row(a_eq.rows() - 1) = row;
  b_eq.conservativeResize(b_eq.size() + 1);
  b_eq[b_eq.size() - 1] = rhs;
}

void LinearProgram::validate() const {
  const Eigen::Index n = num_vars();
  if (a_ub.rows() != b_ub.size() || (a_ub.rows() > 0 && a_ub.cols() != n))
    throw std::invalid_argument("lp: inequality dimension mismatch");
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n))
    throw std::invalid_argument("lp: equality dimension mismatch");
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("lp: bound dimension mismatch");
  if (!objective.allFinite() || !lower.allFinite())
    throw std::invalid_argument("lp: objective and lower bounds must be finite");
  if (a_ub.rows() > 0 && (!a_ub.allFinite() || !b_ub.allFinite()))
    throw std::invalid_argument("lp: non-finite inequality data");
  if (a_eq.rows() > 0 && (!a_eq.allFinite() || !b_eq.allFinite()))
    throw std::invalid_argument("lp: non-finite equality data");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isnan(upper[j]) || upper[j] < lower[j])
      throw std::invalid_argument("lp: inconsistent variable bounds");
  }
}

LpResult lp_solve(const LinearProgram& lp, const SimplexOptions& options) {
  SolveInternal internal = solve_internal(lp, options, /*phase_one_only=*/false);
  LpResult result;
  result.status = internal.status;
  result.iterations = internal.iterations;
  if (internal.status == LpStatus::Optimal) {
    result.x = internal.x;
    result.value = lp.objective.dot(internal.x);
  }
  return result;
}

FeasibilityWitness lp_feasible(const LinearProgram& lp, const SimplexOptions& options) {
  SolveInternal internal = solve_internal(lp, options, /*phase_one_only=*/true);
  FeasibilityWitness witness;
  witness.feasible = internal.status == LpStatus::Optimal;
  if (witness.feasible) witness.point = internal.x;
  return witness;
}

void write_lp_text(const LinearProgram& lp, std::ostream& out) {
  out << "Maximize\n obj:";
  for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
    double cj = lp.objective[j];
    out << (cj < 0 ? " - " : " + ") << std::abs(cj) << " x" << j + 1;
  }
  out << "\nSubject To\n";
  for (Eigen::Index i = 0; i < lp.a_ub.rows(); ++i) {
    out << " c" << i + 1 << ":";
    for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
      double v = lp.a_ub(i, j);
      if (v == 0.0) continue;
      out << (v < 0 ? " - " : " + ") << std::abs(v) << " x" << j + 1;
    }
    out << " <= " << lp.b_ub[i] << "\n";
  }
  for (Eigen::Index i = 0; i < lp.a_eq.rows(); ++i) {
    out << " e" << i + 1 << ":";
    for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
      double v = lp.a_eq(i, j);
      if (v == 0.0) continue;
      out << (v < 0 ? " - " : " + ") << std::abs(v) << " x" << j + 1;
    }
    out << " = " << lp.b_eq[i] << "\n";
  }
  out << "Bounds\n";
  for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
    out << " " << lp.lower[j] << " <= x" << j + 1;
    if (std::isfinite(lp.upper[j])) out << " <= " << lp.upper[j];
    out << "\n";
  }
  out << "End\n";
}

}  // namespace crcopt
