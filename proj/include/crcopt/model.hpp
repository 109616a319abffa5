// Problem model: sum-rate maximization for a rate-splitting downlink under
// per-user minimum rates, a base-station power budget, radar SINR
// protection and per-radar power caps.
//
// Decision variables are the common-rate shares a_q (bit/s) and the power
// vector p = (p0, p_1..p_Q, pr_1..pr_K) in watts. The objective is
// sum_q a_q + sum_q private_rate_q(p). All evaluation here is pure;
// problems are immutable values and safe to share between solver runs.

#pragma once

#include <Eigen/Dense>

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "crcopt/linprog.hpp"
#include "crcopt/scenario.hpp"

namespace crcopt {

struct RateAllocationProblem {
  ChannelSet channels;
  double bandwidth_hz = 1.0;
  double bs_power_budget_w = 1.0;
  double radar_power_budget_w = 1.0;
  double radar_sinr_threshold = 1.0;   // linear
  Eigen::VectorXd min_rate_bps;        // one entry per user

  int num_cus() const { return channels.num_cus(); }
  int num_radars() const { return channels.num_radars(); }

  // Power-vector indexing: [p0, p_1..p_Q, pr_1..pr_K].
  int power_dim() const { return 1 + num_cus() + num_radars(); }
  static int p0_index() { return 0; }
  int p_index(int q) const { return 1 + q; }
  int pr_index(int k) const { return 1 + num_cus() + k; }

  // Full decision vector used by the local solver: [a_1..a_Q | p].
  int decision_dim() const { return num_cus() + power_dim(); }
  int a_index(int q) const { return q; }
  int power_offset() const { return num_cus(); }

  void validate() const;  // throws std::invalid_argument on dimension mismatch

  // Same problem with rates measured in units of the bandwidth. Solvers use
  // this internally for conditioning; reports are rescaled to bit/s.
  RateAllocationProblem rate_normalized() const;
};

RateAllocationProblem make_problem(const Scenario& scenario, const ChannelSet& channels);

struct Allocation {
  Eigen::VectorXd a;   // common-rate share per user, bit/s
  double p0 = 0.0;     // common-message power, W
  Eigen::VectorXd p;   // private-message powers, W
  Eigen::VectorXd pr;  // radar powers, W

  static Allocation zeros(int num_cus, int num_radars);

  Eigen::VectorXd power_vector() const;                  // [p0, p, pr]
  static Allocation from_parts(const Eigen::VectorXd& a, const Eigen::VectorXd& power);
  Eigen::VectorXd decision_vector() const;               // [a | p0, p, pr]
  static Allocation from_decision(const Eigen::VectorXd& x, int num_cus, int num_radars);
};

nlohmann::json allocation_to_json(const Allocation& alloc);
Allocation allocation_from_json(const nlohmann::json& doc);

// Rates in bit/s; power is the packed vector [p0, p, pr].
double common_rate(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power);
double private_rate(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power);
double min_common_rate(const RateAllocationProblem& pb, const Eigen::VectorXd& power);
double radar_sinr(const RateAllocationProblem& pb, int k, const Eigen::VectorXd& power);

// Interference-plus-noise seen by user q when decoding the common message
// (all private powers count) and the private message (own power excluded).
double common_denominator(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power);
double private_denominator(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power);

double objective_value(const RateAllocationProblem& pb, const Allocation& alloc);

// Linear inequality rows over the power vector: a_ub * p <= b_ub together
// with p >= 0 describes the polytope of budget-, cap- and radar-feasible
// powers. Rows appear in the order: BS budget, one radar-protection row per
// radar (SINR threshold in linear form), one power cap per radar.
struct PowerPolytope {
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;

  LinearProgram to_lp() const;  // zero objective, bounds [0, inf)
};

PowerPolytope linearized_radar_constraints(const RateAllocationProblem& pb);

// True when p >= 0 satisfies every polytope row within an absolute
// tolerance scaled per row.
bool power_point_feasible(const PowerPolytope& polytope, const Eigen::VectorXd& power, double tol);

struct FeasibilityReport {
  bool feasible = false;
  double common_cap_residual = 0.0;    // sum a - min common rate, > 0 violated
  Eigen::VectorXd min_rate_residual;   // per user, > 0 violated
  double bs_budget_residual = 0.0;
  Eigen::VectorXd radar_sinr_residual;  // per radar, > 0 violated
  Eigen::VectorXd radar_budget_residual;
  double nonnegativity_residual = 0.0;
  double max_violation = 0.0;           // over normalized residuals
};

// Residuals are normalized by each constraint's right-hand scale;
// `feasible` holds exactly when max_violation <= tol.
FeasibilityReport check_feasibility(const RateAllocationProblem& pb, const Allocation& alloc,
                                    double tol = 1e-8);

}  // namespace crcopt
