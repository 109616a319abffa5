#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "crcopt/model.hpp"
#include "support/synthetic.hpp"
#include "support/test_rng.hpp"

using namespace crcopt;
using crcopt::testing::Rng;

TEST_CASE("model: common rate closed forms") {
  RateAllocationProblem pb = testing::unit_problem(1, 0);
  Allocation alloc = Allocation::zeros(1, 0);

  SUBCASE("zero common power gives zero rate") {
    CHECK(common_rate(pb, 0, alloc.power_vector()) == 0.0);
  }
  SUBCASE("hand-substituted value") {
    alloc.p0 = 3.0;
    CHECK(common_rate(pb, 0, alloc.power_vector()) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("radar power strictly degrades the rate") {
    RateAllocationProblem with_radar = testing::unit_problem(1, 1);
    with_radar.channels.g_rc(0, 0) = 1.0;
    Allocation a2 = Allocation::zeros(1, 1);
    a2.p0 = 2.0;
    double base = common_rate(with_radar, 0, a2.power_vector());
    a2.pr[0] = 0.5;
    CHECK(common_rate(with_radar, 0, a2.power_vector()) < base);
  }
}

TEST_CASE("model: private rate closed forms") {
  SUBCASE("zero private power gives zero rate") {
    RateAllocationProblem pb = testing::unit_problem(2, 0);
    Allocation alloc = Allocation::zeros(2, 0);
    alloc.p[1] = 0.7;
    CHECK(private_rate(pb, 0, alloc.power_vector()) == 0.0);
  }
  SUBCASE("symmetric instance gives equal rates") {
    RateAllocationProblem pb = testing::unit_problem(2, 0);
    Allocation alloc = Allocation::zeros(2, 0);
    alloc.p << 0.4, 0.4;
    double r0 = private_rate(pb, 0, alloc.power_vector());
    double r1 = private_rate(pb, 1, alloc.power_vector());
    CHECK(r0 == doctest::Approx(r1).epsilon(1e-14));
  }
  SUBCASE("hand-substituted value with radar interference") {
    RateAllocationProblem pb = testing::unit_problem(1, 1);
    pb.channels.g_rc(0, 0) = 1.0;
    Allocation alloc = Allocation::zeros(1, 1);
    alloc.p[0] = 1.0;
    alloc.pr[0] = 2.0;
    CHECK(private_rate(pb, 0, alloc.power_vector()) ==
          doctest::Approx(std::log2(1.0 + 1.0 / 3.0)).epsilon(1e-12));
  }
}

TEST_CASE("model: radar sinr") {
  SUBCASE("single radar, silent base station") {
    RateAllocationProblem pb = testing::unit_problem(1, 1);
    pb.channels.h_r[0] = 0.8;
    pb.channels.noise_radar_w[0] = 0.5;
    pb.channels.refresh_normalized();
    Allocation alloc = Allocation::zeros(1, 1);
    alloc.pr[0] = 2.0;
    CHECK(radar_sinr(pb, 0, alloc.power_vector()) == doctest::Approx(0.8 * 2.0 / 0.5).epsilon(1e-12));
    alloc.pr[0] = 0.0;
    CHECK(radar_sinr(pb, 0, alloc.power_vector()) == 0.0);
  }
  SUBCASE("two radars with unit cross gains") {
    RateAllocationProblem pb = testing::unit_problem(1, 2);
    pb.channels.g_rr.setOnes();
    pb.channels.g_rtr.setZero();
    pb.channels.refresh_normalized();
    Allocation alloc = Allocation::zeros(1, 2);
    alloc.pr << 2.0, 1.0;
    // own echo 2, cross 2*1... direct 1*1 + coupled target path 0, noise 1.
    CHECK(radar_sinr(pb, 0, alloc.power_vector()) == doctest::Approx(2.0 / (1.0 + 1.0)).epsilon(1e-12));
    pb.channels.g_rtr.setOnes();
    pb.channels.refresh_normalized();
    CHECK(radar_sinr(pb, 0, alloc.power_vector()) == doctest::Approx(2.0 / (2.0 + 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("model: linear radar rows match the nonlinear threshold test") {
  Rng rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    RateAllocationProblem pb = testing::random_problem(rng, rng.uniform_int(1, 3), rng.uniform_int(1, 3));
    PowerPolytope poly = linearized_radar_constraints(pb);
    int disagreements = 0;
    for (int sample = 0; sample < 1000; ++sample) {
      Eigen::VectorXd power(pb.power_dim());
      for (int i = 0; i < pb.power_dim(); ++i) {
        double cap = i <= pb.num_cus() ? pb.bs_power_budget_w : pb.radar_power_budget_w;
        power[i] = rng.uniform(0.0, cap);
      }
      bool sinr_ok = true;
      for (int k = 0; k < pb.num_radars(); ++k) {
        if (radar_sinr(pb, k, power) < pb.radar_sinr_threshold * (1.0 - 1e-9)) {
          sinr_ok = false;
          break;
        }
      }
      bool linear_ok = true;
      for (int k = 0; k < pb.num_radars(); ++k) {
        Eigen::Index row = 1 + k;  // rows: budget, then one per radar
        double lhs = poly.a_ub.row(row).dot(power);
        if (lhs > poly.b_ub[row] + 1e-9 * std::max(1.0, std::abs(poly.b_ub[row]))) {
          linear_ok = false;
          break;
        }
      }
      if (sinr_ok != linear_ok) ++disagreements;
    }
    CHECK(disagreements == 0);
  }
}

TEST_CASE("model: single-radar linear row reduces to the two-term form") {
  RateAllocationProblem pb = testing::unit_problem(2, 1);
  pb.channels.h_cr[0] = 0.3;
  pb.channels.h_r[0] = 2.0;
  pb.channels.noise_radar_w[0] = 0.8;
  pb.channels.refresh_normalized();
  pb.radar_sinr_threshold = 4.0;
  PowerPolytope poly = linearized_radar_constraints(pb);
  // Row 1 is the radar row: -pr/gamma + h_tilde * (p0+p1+p2) <= -sigma_tilde.
  Eigen::VectorXd power(pb.power_dim());
  power << 0.5, 0.25, 0.25, 3.0;
  double expected = -3.0 / 4.0 + (0.3 / 2.0) * 1.0;
  CHECK(poly.a_ub.row(1).dot(power) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(poly.b_ub[1] == doctest::Approx(-0.8 / 2.0).epsilon(1e-12));
}

TEST_CASE("model: polytope nonemptiness agrees with the feasibility kernel") {
  // Reference defaults: the radar protection cannot be met, and both the
  // direct sum argument and the LP agree on that.
  Scenario s = default_scenario();
  Geometry g = place_entities(s, 2, 11);
  RateAllocationProblem pb = make_problem(s, compute_channels(s, g));
  PowerPolytope poly = linearized_radar_constraints(pb);
  FeasibilityWitness w = lp_feasible(poly.to_lp());
  CHECK_FALSE(w.feasible);

  // A relaxed threshold with quieter radar receivers is feasible.
  Scenario s2 = default_scenario();
  s2.radar_sinr_threshold = 0.1;
  s2.noise_radar_w = 2e-14;
  RateAllocationProblem pb2 = make_problem(s2, compute_channels(s2, g));
  FeasibilityWitness w2 = lp_feasible(linearized_radar_constraints(pb2).to_lp());
  CHECK(w2.feasible);
  CHECK(power_point_feasible(linearized_radar_constraints(pb2), w2.point, 1e-9));
}

TEST_CASE("model: objective is the sum of shares and private rates") {
  RateAllocationProblem pb = testing::unit_problem(2, 0);
  Allocation alloc = Allocation::zeros(2, 0);
  CHECK(objective_value(pb, alloc) == 0.0);
  alloc.a << 1.0, 2.0;
  alloc.p << 0.3, 0.9;
  Eigen::VectorXd power = alloc.power_vector();
  double expected = 3.0 + private_rate(pb, 0, power) + private_rate(pb, 1, power);
  CHECK(objective_value(pb, alloc) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("model: doubling the bandwidth doubles every rate") {
  Rng rng(77777);
  RateAllocationProblem pb = testing::random_problem(rng, 3, 2);
  RateAllocationProblem wide = pb;
  wide.bandwidth_hz = 2.0 * pb.bandwidth_hz;
  Eigen::VectorXd power(pb.power_dim());
  for (int i = 0; i < pb.power_dim(); ++i) power[i] = rng.uniform(0.0, 1.0);
  for (int q = 0; q < pb.num_cus(); ++q) {
    CHECK(common_rate(wide, q, power) == doctest::Approx(2.0 * common_rate(pb, q, power)).epsilon(1e-14));
    CHECK(private_rate(wide, q, power) == doctest::Approx(2.0 * private_rate(pb, q, power)).epsilon(1e-14));
  }
}

TEST_CASE("model: rate monotonicity in own power and interference") {
  Rng rng(5555);
  RateAllocationProblem pb = testing::random_problem(rng, 2, 1);
  Eigen::VectorXd power(pb.power_dim());
  for (int i = 0; i < pb.power_dim(); ++i) power[i] = rng.uniform(0.1, 1.0);
  double base = private_rate(pb, 0, power);
  Eigen::VectorXd more_own = power;
  more_own[pb.p_index(0)] += 0.2;
  CHECK(private_rate(pb, 0, more_own) > base);
  Eigen::VectorXd more_interference = power;
  more_interference[pb.p_index(1)] += 0.2;
  CHECK(private_rate(pb, 0, more_interference) < base);
}

TEST_CASE("model: feasibility report residuals") {
  RateAllocationProblem pb = testing::unit_problem(2, 1);
  pb.min_rate_bps << 0.5, 0.5;
  pb.channels.g_rc.setConstant(0.1);
  pb.channels.h_cr.setConstant(0.05);
  pb.channels.refresh_normalized();

  SUBCASE("zero allocation violates the minimum rates") {
    Allocation alloc = Allocation::zeros(2, 1);
    FeasibilityReport report = check_feasibility(pb, alloc);
    CHECK_FALSE(report.feasible);
    CHECK(report.min_rate_residual[0] == doctest::Approx(0.5));
    CHECK(report.min_rate_residual[1] == doctest::Approx(0.5));
  }
  SUBCASE("budget overflow is reported with its magnitude") {
    Allocation alloc = Allocation::zeros(2, 1);
    alloc.p << 0.8, 0.6;
    FeasibilityReport report = check_feasibility(pb, alloc);
    CHECK(report.bs_budget_residual == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("feasible equals max violation under tolerance") {
    Allocation alloc = Allocation::zeros(2, 1);
    alloc.pr[0] = 2.0;  // cap is 1
    FeasibilityReport report = check_feasibility(pb, alloc, 1e-8);
    CHECK_FALSE(report.feasible);
    CHECK(report.max_violation >= 1.0 - 1e-12);
  }
}

TEST_CASE("model: allocation json round trip") {
  Allocation alloc = Allocation::zeros(2, 1);
  alloc.a << 1.5, 2.5;
  alloc.p0 = 0.25;
  alloc.p << 0.125, 0.5;
  alloc.pr << 3.0;
  nlohmann::json doc = allocation_to_json(alloc);
  Allocation back = allocation_from_json(doc);
  CHECK((back.a.array() == alloc.a.array()).all());
  CHECK(back.p0 == alloc.p0);
  CHECK((back.p.array() == alloc.p.array()).all());
  CHECK((back.pr.array() == alloc.pr.array()).all());
}
