#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "crcopt/sqp.hpp"
#include "support/finite_difference.hpp"
#include "support/synthetic.hpp"
#include "support/test_rng.hpp"

using namespace crcopt;
using crcopt::testing::Rng;

namespace {

Eigen::VectorXd random_interior_point(Rng& rng, const RateAllocationProblem& pb) {
  Eigen::VectorXd x(pb.decision_dim());
  for (int q = 0; q < pb.num_cus(); ++q) x[q] = rng.uniform(0.1, 2.0);
  for (int i = 0; i < pb.power_dim(); ++i) {
    x[pb.power_offset() + i] = rng.uniform(0.1, 1.5);
  }
  return x;
}

}  // namespace

TEST_CASE("sqp: objective gradient") {
  Rng rng(1001);
  SUBCASE("share coordinates always have slope -1") {
    RateAllocationProblem pb = testing::random_problem(rng, 3, 2);
    Eigen::VectorXd x = random_interior_point(rng, pb);
    Eigen::VectorXd grad = objective_gradient(pb, x);
    for (int q = 0; q < pb.num_cus(); ++q) CHECK(grad[q] == -1.0);
    CHECK(grad[pb.power_offset()] == 0.0);  // common power is absent from F
  }
  SUBCASE("matches central differences on random interior points") {
    for (int trial = 0; trial < 100; ++trial) {
      RateAllocationProblem pb =
          testing::random_problem(rng, rng.uniform_int(1, 3), rng.uniform_int(0, 2));
      Eigen::VectorXd x = random_interior_point(rng, pb);
      auto f = [&](const Eigen::VectorXd& point) {
        Allocation alloc = Allocation::from_decision(point, pb.num_cus(), pb.num_radars());
        return -objective_value(pb, alloc);
      };
      CHECK(testing::gradients_match(objective_gradient(pb, x), testing::fd_gradient(f, x)));
    }
  }
  SUBCASE("symmetric instance gives swap-symmetric gradient") {
    RateAllocationProblem pb = testing::unit_problem(2, 0);
    Eigen::VectorXd x(pb.decision_dim());
    x << 0.5, 0.5, 0.2, 0.3, 0.3;
    Eigen::VectorXd grad = objective_gradient(pb, x);
    CHECK(grad[pb.power_offset() + pb.p_index(0)] ==
          doctest::Approx(grad[pb.power_offset() + pb.p_index(1)]).epsilon(1e-14));
  }
}

TEST_CASE("sqp: constraint linearization") {
  Rng rng(2002);
  SUBCASE("gradients match central differences") {
    for (int trial = 0; trial < 50; ++trial) {
      RateAllocationProblem pb =
          testing::random_problem(rng, rng.uniform_int(1, 3), rng.uniform_int(0, 2));
      Eigen::VectorXd x = random_interior_point(rng, pb);
      for (int q = 0; q < pb.num_cus(); ++q) {
        auto cap = [&](const Eigen::VectorXd& point) { return common_cap_values(pb, point)[q]; };
        auto rate = [&](const Eigen::VectorXd& point) { return min_rate_values(pb, point)[q]; };
        CHECK(testing::gradients_match(common_cap_gradient(pb, x, q), testing::fd_gradient(cap, x)));
        CHECK(testing::gradients_match(min_rate_gradient(pb, x, q), testing::fd_gradient(rate, x)));
      }
    }
  }
  SUBCASE("active row passes through the origin step") {
    RateAllocationProblem pb = testing::unit_problem(1, 0);
    Eigen::VectorXd x(pb.decision_dim());
    x << 2.0, 3.0, 0.0;  // share exactly equals the common rate log2(4)
    Eigen::VectorXd power(pb.power_dim());
    power << 3.0, 0.0;
    x[0] = common_rate(pb, 0, power);
    AffineConstraints rows = linearize_constraints(pb, x);
    CHECK(rows.b_ub[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("linear rows are reproduced coefficient for coefficient") {
    RateAllocationProblem pb = testing::random_problem(rng, 2, 2);
    Eigen::VectorXd x = random_interior_point(rng, pb);
    AffineConstraints rows = linearize_constraints(pb, x);
    PowerPolytope poly = linearized_radar_constraints(pb);
    const int off = pb.power_offset();
    for (Eigen::Index i = 0; i < poly.a_ub.rows(); ++i) {
      Eigen::Index row = rows.num_nonlinear + i;
      CHECK((rows.a_ub.row(row).segment(off, pb.power_dim()) - poly.a_ub.row(i)).norm() == 0.0);
      CHECK(rows.a_ub.row(row).head(off).norm() == 0.0);
      double expected_rhs = poly.b_ub[i] - poly.a_ub.row(i).dot(x.tail(pb.power_dim()));
      CHECK(rows.b_ub[row] == doctest::Approx(expected_rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("sqp: bfgs update") {
  SUBCASE("identity fixed point") {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd u(3);
    u << 0.3, -0.2, 0.9;
    Eigen::MatrixXd updated = bfgs_update(h, u, u);
    CHECK((updated - h).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("hand-evaluated rank-two update") {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd u(2), v(2);
    u << 1.0, 0.0;
    v << 2.0, 0.0;
    Eigen::MatrixXd updated = bfgs_update(h, u, v);
    CHECK(updated(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(updated(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(updated(0, 1) == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("negative curvature keeps the matrix positive definite") {
    Rng rng(3003);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(4, 4);
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd u(4), v(4);
      for (int i = 0; i < 4; ++i) {
        u[i] = rng.uniform(-1.0, 1.0);
        v[i] = rng.uniform(-1.0, 1.0);  // arbitrary sign of v'u
      }
      h = bfgs_update(h, u, v);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
      CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * h.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("sqp: fractional-programming line search") {
  SUBCASE("closed-form multiplier at alpha zero") {
    LineSearchProblem lsp;
    lsp.v = Eigen::VectorXd::Constant(1, 0.7);
    lsp.w = Eigen::VectorXd::Constant(1, 4.0);
    lsp.vp = Eigen::VectorXd::Constant(1, 0.2);
    lsp.wp = Eigen::VectorXd::Constant(1, 2.0);
    lsp.a_base = Eigen::VectorXd::Zero(1);
    lsp.a_slope = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd beta = lsp.multiplier_update(0.0);
    CHECK(beta[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("objective trace is nondecreasing on random search problems") {
    Rng rng(4004);
    for (int trial = 0; trial < 100; ++trial) {
      RateAllocationProblem pb =
          testing::random_problem(rng, rng.uniform_int(1, 3), rng.uniform_int(0, 2));
      Eigen::VectorXd x = random_interior_point(rng, pb);
      Eigen::VectorXd s(pb.decision_dim());
      for (int i = 0; i < pb.decision_dim(); ++i) s[i] = rng.uniform(-0.4, 0.6);
      s = s.cwiseMax(-x);  // keep x + s nonnegative as the QP would
      if (s.lpNorm<Eigen::Infinity>() == 0.0) continue;
      LineSearchProblem lsp = build_line_search(pb, x, s);
      FpResult fp = fp_line_search(lsp);
      REQUIRE(fp.objective_trace.size() >= 2);
      for (size_t i = 1; i < fp.objective_trace.size(); ++i) {
        CHECK(fp.objective_trace[i] >= fp.objective_trace[i - 1] - 1e-12);
      }
      CHECK(fp.alpha >= 1e-12);
      CHECK(fp.alpha <= 1.0);
    }
  }
  SUBCASE("zero direction violates the precondition") {
    RateAllocationProblem pb = testing::unit_problem(1, 0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(pb.decision_dim(), 0.5);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(pb.decision_dim());
    CHECK_THROWS_AS(build_line_search(pb, x, s), std::invalid_argument);
  }
}

TEST_CASE("sqp: single-user closed form is recovered") {
  // One user, no radar: any full-budget split achieves
  // log2(1 + h * budget / noise); with budget 3 that is exactly 2.
  RateAllocationProblem pb = testing::unit_problem(1, 0);
  pb.bs_power_budget_w = 3.0;
  pb.min_rate_bps[0] = 0.1;
  SqpReport report = sqp_solve(pb);
  CHECK(report.status == SqpStatus::Converged);
  CHECK(report.objective_bps == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(report.feasibility.max_violation <= 1e-6);
}

TEST_CASE("sqp: tiny coupled instance reaches a KKT point") {
  RateAllocationProblem pb = testing::unit_problem(1, 1);
  pb.channels.g_rc(0, 0) = 0.1;
  pb.channels.h_cr[0] = 0.05;
  pb.channels.h_r[0] = 1.0;
  pb.channels.noise_radar_w[0] = 0.5;
  pb.channels.refresh_normalized();
  pb.bs_power_budget_w = 2.0;
  pb.radar_power_budget_w = 4.0;
  pb.radar_sinr_threshold = 1.0;
  pb.min_rate_bps[0] = 0.2;

  SqpReport report = sqp_solve(pb);
  REQUIRE(report.status == SqpStatus::Converged);
  CHECK(report.kkt_residual <= 1e-6);
  CHECK(report.feasibility.max_violation <= 1e-6);
  CHECK(report.trace.size() <= 500);
}

TEST_CASE("sqp: iteration cap and determinism") {
  Rng rng(6006);
  RateAllocationProblem pb = testing::random_problem(rng, 2, 1);
  SqpOptions options;
  options.max_iterations = 7;
  SqpReport a = sqp_solve(pb, options);
  CHECK(a.trace.size() <= 7);

  SqpReport b = sqp_solve(pb, options);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].objective_bps == b.trace[i].objective_bps);  // bitwise
    CHECK(a.trace[i].step_norm == b.trace[i].step_norm);
  }
}

TEST_CASE("sqp: restart from a converged point stays put") {
  RateAllocationProblem pb = testing::unit_problem(1, 0);
  pb.bs_power_budget_w = 3.0;
  pb.min_rate_bps[0] = 0.1;
  SqpReport first = sqp_solve(pb);
  REQUIRE(first.status == SqpStatus::Converged);
  SqpReport second = sqp_solve(pb, first.allocation);
  CHECK(std::abs(second.objective_bps - first.objective_bps) <= 1e-6);
}

TEST_CASE("sqp: trace csv export") {
  std::vector<SqpTracePoint> trace = {{0, 1.5, 0.25, 1e-3}, {1, 1.75, 0.1, 1e-4}};
  std::ostringstream os;
  write_trace_csv(trace, os);
  CHECK(os.str().rfind("iter,objective,step_norm,kkt_residual\n", 0) == 0);
  CHECK(os.str().find("0,1.5,0.25,0.001") != std::string::npos);
}
