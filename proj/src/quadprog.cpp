#include "crcopt/quadprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace crcopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Unified inequality rows: a_ub first, then finite lower bounds as -x <= -l,
// then finite upper bounds as x <= u. Keeps the provenance of each row so
// multipliers can be reported per group.
struct RowSet {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  std::vector<int> kind;   // 0 = a_ub, 1 = lower, 2 = upper
  std::vector<Eigen::Index> index;  // row or variable index within the group
};

RowSet build_rows(const QuadraticProgram& qp) {
  const Eigen::Index n = qp.num_vars();
  std::vector<Eigen::VectorXd> rows;
  RowSet rs;
  for (Eigen::Index i = 0; i < qp.a_ub.rows(); ++i) {
    rows.push_back(qp.a_ub.row(i));
    rs.b.conservativeResize(rs.b.size() + 1);
    rs.b[rs.b.size() - 1] = qp.b_ub[i];
    rs.kind.push_back(0);
    rs.index.push_back(i);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(qp.lower[j])) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e[j] = -1.0;
      rows.push_back(e);
      rs.b.conservativeResize(rs.b.size() + 1);
      rs.b[rs.b.size() - 1] = -qp.lower[j];
      rs.kind.push_back(1);
      rs.index.push_back(j);
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(qp.upper[j])) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e[j] = 1.0;
      rows.push_back(e);
      rs.b.conservativeResize(rs.b.size() + 1);
      rs.b[rs.b.size() - 1] = qp.upper[j];
      rs.kind.push_back(2);
      rs.index.push_back(j);
    }
  }
  rs.a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n);
  for (size_t i = 0; i < rows.size(); ++i) rs.a.row(static_cast<Eigen::Index>(i)) = rows[i];
  return rs;
}

bool rows_feasible(const RowSet& rs, const QuadraticProgram& qp, const Eigen::VectorXd& x, double tol) {
  for (Eigen::Index i = 0; i < rs.a.rows(); ++i) {
    double scale = std::max(1.0, std::abs(rs.b[i]));
    if (rs.a.row(i).dot(x) > rs.b[i] + tol * scale) return false;
  }
  for (Eigen::Index i = 0; i < qp.a_eq.rows(); ++i) {
    double scale = std::max(1.0, std::abs(qp.b_eq[i]));
    if (std::abs(qp.a_eq.row(i).dot(x) - qp.b_eq[i]) > tol * scale) return false;
  }
  return true;
}

Eigen::VectorXd find_feasible_start(const QuadraticProgram& qp, const QpOptions& opt, bool& ok) {
  const Eigen::Index n = qp.num_vars();
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  RowSet rs = build_rows(qp);
  if (rows_feasible(rs, qp, zero, opt.constraint_tol)) {
    ok = true;
    return zero;
  }
  LinearProgram lp = LinearProgram::with_dims(n);
  lp.a_ub = qp.a_ub;
  lp.b_ub = qp.b_ub;
  lp.a_eq = qp.a_eq;
  lp.b_eq = qp.b_eq;
  lp.upper = qp.upper;
  // The LP kernel needs finite lower bounds; unbounded-below variables get a
  // wide internal box that the QP iteration is free to leave afterwards.
  lp.lower = qp.lower;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(lp.lower[j])) lp.lower[j] = -1e9;
  }
  FeasibilityWitness w = lp_feasible(lp);
  ok = w.feasible;
  return ok ? w.point : zero;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

QuadraticProgram QuadraticProgram::with_dims(Eigen::Index num_vars) {
  QuadraticProgram qp;
  qp.hessian = Eigen::MatrixXd::Identity(num_vars, num_vars);
  qp.linear = Eigen::VectorXd::Zero(num_vars);
  qp.a_ub = Eigen::MatrixXd::Zero(0, num_vars);
  qp.b_ub = Eigen::VectorXd::Zero(0);
  qp.a_eq = Eigen::MatrixXd::Zero(0, num_vars);
  qp.b_eq = Eigen::VectorXd::Zero(0);
  qp.lower = Eigen::VectorXd::Constant(num_vars, -kInf);
  qp.upper = Eigen::VectorXd::Constant(num_vars, kInf);
  return qp;
}

void QuadraticProgram::add_ub_row(const Eigen::VectorXd& row, double rhs) {
  if (row.size() != num_vars()) throw std::invalid_argument("qp: row dimension mismatch");
  a_ub.conservativeResize(a_ub.rows() + 1, num_vars());
  a_ub.row(a_ub.rows() - 1) = row;
  b_ub.conservativeResize(b_ub.size() + 1);
  b_ub[b_ub.size() - 1] = rhs;
}

void QuadraticProgram::validate() const {
  const Eigen::Index n = num_vars();
  if (hessian.rows() != n || hessian.cols() != n)
    throw std::invalid_argument("qp: hessian dimension mismatch");
  double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("qp: hessian not symmetric");
  if (a_ub.rows() != b_ub.size() || (a_ub.rows() > 0 && a_ub.cols() != n))
    throw std::invalid_argument("qp: inequality dimension mismatch");
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n))
    throw std::invalid_argument("qp: equality dimension mismatch");
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("qp: bound dimension mismatch");
}

QpResult qp_solve(const QuadraticProgram& qp, const QpOptions& opt) {
  qp.validate();
  const Eigen::Index n = qp.num_vars();
  const Eigen::MatrixXd hess = 0.5 * (qp.hessian + qp.hessian.transpose());
  QpResult result;
  result.mult_ub = Eigen::VectorXd::Zero(qp.a_ub.rows());
  result.mult_eq = Eigen::VectorXd::Zero(qp.a_eq.rows());
  result.mult_lower = Eigen::VectorXd::Zero(n);
  result.mult_upper = Eigen::VectorXd::Zero(n);

  bool feasible = false;
  Eigen::VectorXd x = find_feasible_start(qp, opt, feasible);
  if (!feasible) {
    result.status = QpStatus::Infeasible;
    return result;
  }

  RowSet rs = build_rows(qp);
  const Eigen::Index m_eq = qp.a_eq.rows();
  const Eigen::Index m_ineq = rs.a.rows();

  // Working set: indices into rs rows; equalities are always active.
  std::vector<Eigen::Index> working;
  auto constraint_matrix = [&](void) {
    Eigen::MatrixXd c(m_eq + static_cast<Eigen::Index>(working.size()), n);
    for (Eigen::Index i = 0; i < m_eq; ++i) c.row(i) = qp.a_eq.row(i);
    for (size_t i = 0; i < working.size(); ++i)
      c.row(m_eq + static_cast<Eigen::Index>(i)) = rs.a.row(working[i]);
    return c;
  };
  auto rank_of = [&](const Eigen::MatrixXd& mat) {
    if (mat.rows() == 0) return Eigen::Index{0};
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(mat);
    qr.setThreshold(1e-10);
    return qr.rank();
  };

  // Seed with constraints active at the start point, keeping independence.
  for (Eigen::Index i = 0; i < m_ineq; ++i) {
    double scale = std::max(1.0, std::abs(rs.b[i]));
    if (std::abs(rs.a.row(i).dot(x) - rs.b[i]) <= opt.constraint_tol * scale) {
      working.push_back(i);
      Eigen::MatrixXd c = constraint_matrix();
      if (rank_of(c) < c.rows()) working.pop_back();
    }
  }

  Eigen::VectorXd multipliers;  // for [a_eq; working rows]
  for (result.iterations = 0; result.iterations < opt.max_iterations; ++result.iterations) {
    Eigen::MatrixXd c = constraint_matrix();
    const Eigen::Index mw = c.rows();
    Eigen::VectorXd grad = hess * x + qp.linear;

    // Null-space step: p minimizes the quadratic model subject to C p = 0.
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    if (mw < n) {
      Eigen::MatrixXd z;
      if (mw == 0) {
        z = Eigen::MatrixXd::Identity(n, n);
      } else {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(c.transpose());
        Eigen::MatrixXd q = qr.householderQ();
        z = q.rightCols(n - mw);
      }
      Eigen::MatrixXd reduced = z.transpose() * hess * z;
      Eigen::VectorXd rhs = -z.transpose() * grad;
      p = z * reduced.llt().solve(rhs);
    }

    if (p.lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      // Stationary on the working set. Re-solve the bordered KKT system to
      // remove accumulated drift, then check the multipliers.
      multipliers = Eigen::VectorXd::Zero(mw);
      if (mw > 0) {
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + mw, n + mw);
        kkt.topLeftCorner(n, n) = hess;
        kkt.topRightCorner(n, mw) = c.transpose();
        kkt.bottomLeftCorner(mw, n) = c;
        Eigen::VectorXd rhs(n + mw);
        rhs.head(n) = -qp.linear;
        for (Eigen::Index i = 0; i < m_eq; ++i) rhs[n + i] = qp.b_eq[i];
        for (size_t i = 0; i < working.size(); ++i)
          rhs[n + m_eq + static_cast<Eigen::Index>(i)] = rs.b[working[i]];
        Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
        Eigen::VectorXd x_refined = sol.head(n);
        if (rows_feasible(rs, qp, x_refined, opt.constraint_tol)) x = x_refined;
        multipliers = sol.tail(mw);
      } else {
        x = -hess.llt().solve(qp.linear);
      }
      Eigen::Index drop = -1;
      for (size_t i = 0; i < working.size(); ++i) {
        if (multipliers[m_eq + static_cast<Eigen::Index>(i)] < -opt.multiplier_tol) {
          drop = static_cast<Eigen::Index>(i);
          break;  // lowest index first, Bland-style
        }
      }
      if (drop < 0) {
        result.status = QpStatus::Optimal;
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Step length to the nearest blocking constraint outside the working set.
    double alpha = 1.0;
    Eigen::Index blocker = -1;
    for (Eigen::Index i = 0; i < m_ineq; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      double ap = rs.a.row(i).dot(p);
      if (ap <= 1e-13) continue;
      double gap = rs.b[i] - rs.a.row(i).dot(x);
      double limit = std::max(gap, 0.0) / ap;
      if (limit < alpha - 1e-13) {
        alpha = limit;
        blocker = i;
      }
    }
    x += alpha * p;
    if (blocker >= 0) {
      working.push_back(blocker);
      Eigen::MatrixXd c2 = constraint_matrix();
      if (rank_of(c2) < c2.rows()) working.pop_back();
    }
  }

  if (result.status != QpStatus::Optimal) {
    result.status = QpStatus::IterationLimit;
    return result;
  }

  result.x = x;
  result.value = 0.5 * x.dot(hess * x) + qp.linear.dot(x);

  // Distribute multipliers back to their groups.
  for (Eigen::Index i = 0; i < m_eq; ++i) result.mult_eq[i] = multipliers[i];
  for (size_t i = 0; i < working.size(); ++i) {
    Eigen::Index row = working[i];
    double lam = std::max(multipliers[m_eq + static_cast<Eigen::Index>(i)], 0.0);
    switch (rs.kind[static_cast<size_t>(row)]) {
      case 0: result.mult_ub[rs.index[static_cast<size_t>(row)]] = lam; break;
      case 1: result.mult_lower[rs.index[static_cast<size_t>(row)]] = lam; break;
      case 2: result.mult_upper[rs.index[static_cast<size_t>(row)]] = lam; break;
    }
  }

  // KKT residual: stationarity plus complementarity.
  Eigen::VectorXd stat = hess * x + qp.linear;
  if (m_eq > 0) stat += qp.a_eq.transpose() * result.mult_eq;
  if (qp.a_ub.rows() > 0) stat += qp.a_ub.transpose() * result.mult_ub;
  stat -= result.mult_lower;
  stat += result.mult_upper;
  double comp = 0.0;
  for (Eigen::Index i = 0; i < qp.a_ub.rows(); ++i)
    comp = std::max(comp, std::abs(result.mult_ub[i] * (qp.a_ub.row(i).dot(x) - qp.b_ub[i])));
  result.kkt_residual = std::max(stat.lpNorm<Eigen::Infinity>(), comp);
  return result;
}

}  // namespace crcopt
