#include "crcopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace crcopt {

namespace {

double log2_1p(double x) { return std::log1p(x) * 1.4426950408889634; }

}  // namespace

void RateAllocationProblem::validate() const {
  const int num_q = num_cus();
  const int num_k = num_radars();
  if (num_q < 1) throw std::invalid_argument("problem: need at least one user");
  if (channels.g_rc.rows() != num_k || channels.g_rc.cols() != num_q ||
      channels.h_cr.size() != num_k || channels.g_rr.rows() != num_k ||
      channels.g_rr.cols() != num_k || channels.g_rtr.rows() != num_k ||
      channels.g_rtr.cols() != num_k || channels.noise_cu_w.size() != num_q ||
      channels.noise_radar_w.size() != num_k) {
    throw std::invalid_argument("problem: channel dimensions inconsistent");
  }
  if (min_rate_bps.size() != num_q) {
    throw std::invalid_argument("problem: min_rate dimension mismatch");
  }
  if (min_rate_bps.minCoeff() < 0.0) {
    throw std::invalid_argument("problem: negative rate threshold");
  }
  if (!(bandwidth_hz > 0.0) || !(bs_power_budget_w > 0.0) || !(radar_power_budget_w > 0.0) ||
      !(radar_sinr_threshold > 0.0)) {
    throw std::invalid_argument("problem: non-positive parameter");
  }
}

RateAllocationProblem RateAllocationProblem::rate_normalized() const {
  RateAllocationProblem pb = *this;
  pb.min_rate_bps = min_rate_bps / bandwidth_hz;
  pb.bandwidth_hz = 1.0;
  return pb;
}

RateAllocationProblem make_problem(const Scenario& scenario, const ChannelSet& channels) {
  RateAllocationProblem pb;
  pb.channels = channels;
  pb.bandwidth_hz = scenario.bandwidth_hz;
  pb.bs_power_budget_w = scenario.bs_power_budget_w;
  pb.radar_power_budget_w = scenario.radar_power_budget_w;
  pb.radar_sinr_threshold = scenario.radar_sinr_threshold;
  pb.min_rate_bps = Eigen::VectorXd::Constant(channels.num_cus(), scenario.min_rate_bps);
  pb.validate();
  return pb;
}

Allocation Allocation::zeros(int num_cus, int num_radars) {
  Allocation alloc;
  alloc.a = Eigen::VectorXd::Zero(num_cus);
  alloc.p = Eigen::VectorXd::Zero(num_cus);
  alloc.pr = Eigen::VectorXd::Zero(num_radars);
  return alloc;
}

Eigen::VectorXd Allocation::power_vector() const {
  Eigen::VectorXd power(1 + p.size() + pr.size());
  power[0] = p0;
  power.segment(1, p.size()) = p;
  power.tail(pr.size()) = pr;
  return power;
}

Allocation Allocation::from_parts(const Eigen::VectorXd& a, const Eigen::VectorXd& power) {
  Allocation alloc;
  const Eigen::Index num_q = a.size();
  alloc.a = a;
  alloc.p0 = power[0];
  alloc.p = power.segment(1, num_q);
  alloc.pr = power.tail(power.size() - 1 - num_q);
  return alloc;
}

Eigen::VectorXd Allocation::decision_vector() const {
  Eigen::VectorXd x(a.size() + 1 + p.size() + pr.size());
  x.head(a.size()) = a;
  x.tail(1 + p.size() + pr.size()) = power_vector();
  return x;
}

Allocation Allocation::from_decision(const Eigen::VectorXd& x, int num_cus, int num_radars) {
  Allocation alloc;
  alloc.a = x.head(num_cus);
  alloc.p0 = x[num_cus];
  alloc.p = x.segment(num_cus + 1, num_cus);
  alloc.pr = x.tail(num_radars);
  return alloc;
}

nlohmann::json allocation_to_json(const Allocation& alloc) {
  nlohmann::json doc;
  doc["a_bps"] = std::vector<double>(alloc.a.data(), alloc.a.data() + alloc.a.size());
  doc["p0_w"] = alloc.p0;
  doc["p_w"] = std::vector<double>(alloc.p.data(), alloc.p.data() + alloc.p.size());
  doc["pr_w"] = std::vector<double>(alloc.pr.data(), alloc.pr.data() + alloc.pr.size());
  return doc;
}

Allocation allocation_from_json(const nlohmann::json& doc) {
  Allocation alloc;
  auto to_vec = [](const nlohmann::json& node) {
    std::vector<double> values = node.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())).eval();
  };
  alloc.a = to_vec(doc.at("a_bps"));
  alloc.p0 = doc.at("p0_w").get<double>();
  alloc.p = to_vec(doc.at("p_w"));
  alloc.pr = to_vec(doc.at("pr_w"));
  return alloc;
}

double common_denominator(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  double sum_private = power.segment(1, num_q).sum();
  double radar = 0.0;
  for (int k = 0; k < num_k; ++k) radar += pb.channels.g_rc(k, q) * power[pb.pr_index(k)];
  return pb.channels.h_c[q] * sum_private + radar + pb.channels.noise_cu_w[q];
}

double private_denominator(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power) {
  return common_denominator(pb, q, power) - pb.channels.h_c[q] * power[pb.p_index(q)];
}

double common_rate(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power) {
  double denom = common_denominator(pb, q, power);
  return pb.bandwidth_hz * log2_1p(pb.channels.h_c[q] * power[RateAllocationProblem::p0_index()] / denom);
}

double private_rate(const RateAllocationProblem& pb, int q, const Eigen::VectorXd& power) {
  double denom = private_denominator(pb, q, power);
  return pb.bandwidth_hz * log2_1p(pb.channels.h_c[q] * power[pb.p_index(q)] / denom);
}

double min_common_rate(const RateAllocationProblem& pb, const Eigen::VectorXd& power) {
  double best = std::numeric_limits<double>::infinity();
  for (int q = 0; q < pb.num_cus(); ++q) best = std::min(best, common_rate(pb, q, power));
  return best;
}

double radar_sinr(const RateAllocationProblem& pb, int k, const Eigen::VectorXd& power) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  double cross = 0.0;
  for (int kp = 0; kp < num_k; ++kp) {
    if (kp == k) continue;
    cross += (pb.channels.g_rr(kp, k) + pb.channels.rtr_coupling * pb.channels.g_rtr(kp, k)) *
             power[pb.pr_index(kp)];
  }
  double bs_leak = pb.channels.h_cr[k] * power.head(1 + num_q).sum();
  double denom = cross + bs_leak + pb.channels.noise_radar_w[k];
  return pb.channels.h_r[k] * power[pb.pr_index(k)] / denom;
}

double objective_value(const RateAllocationProblem& pb, const Allocation& alloc) {
  Eigen::VectorXd power = alloc.power_vector();
  double total = alloc.a.sum();
  for (int q = 0; q < pb.num_cus(); ++q) total += private_rate(pb, q, power);
  return total;
}

PowerPolytope linearized_radar_constraints(const RateAllocationProblem& pb) {
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  const int dim = pb.power_dim();
  PowerPolytope poly;
  poly.a_ub = Eigen::MatrixXd::Zero(1 + 2 * num_k, dim);
  poly.b_ub = Eigen::VectorXd::Zero(1 + 2 * num_k);

  // BS budget: p0 + sum_q p_q <= budget.
  poly.a_ub.row(0).head(1 + num_q).setOnes();
  poly.b_ub[0] = pb.bs_power_budget_w;

  // Radar protection in linear form:
  //   pr_k / gamma - sum_{k'!=k} g_tilde(k',k) pr_k' - h_tilde_k sum p >= sigma_tilde_k
  // stored as the <= row with flipped signs.
  for (int k = 0; k < num_k; ++k) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(dim);
    row[pb.pr_index(k)] = -1.0 / pb.radar_sinr_threshold;
    for (int kp = 0; kp < num_k; ++kp) {
      if (kp == k) continue;
      row[pb.pr_index(kp)] = pb.channels.g_tilde(kp, k);
    }
    for (int i = 0; i <= num_q; ++i) row[i] = pb.channels.h_tilde[k];
    poly.a_ub.row(1 + k) = row;
    poly.b_ub[1 + k] = -pb.channels.sigma_tilde[k];
  }

  // Per-radar power caps.
  for (int k = 0; k < num_k; ++k) {
    poly.a_ub(1 + num_k + k, pb.pr_index(k)) = 1.0;
    poly.b_ub[1 + num_k + k] = pb.radar_power_budget_w;
  }
  return poly;
}

LinearProgram PowerPolytope::to_lp() const {
  LinearProgram lp = LinearProgram::with_dims(a_ub.cols());
  lp.a_ub = a_ub;
  lp.b_ub = b_ub;
  return lp;
}

bool power_point_feasible(const PowerPolytope& polytope, const Eigen::VectorXd& power, double tol) {
  if (power.minCoeff() < -tol) return false;
  for (Eigen::Index i = 0; i < polytope.a_ub.rows(); ++i) {
    double scale = std::max(1.0, std::abs(polytope.b_ub[i]));
    if (polytope.a_ub.row(i).dot(power) > polytope.b_ub[i] + tol * scale) return false;
  }
  return true;
}

FeasibilityReport check_feasibility(const RateAllocationProblem& pb, const Allocation& alloc,
                                    double tol) {
  pb.validate();
  const int num_q = pb.num_cus();
  const int num_k = pb.num_radars();
  Eigen::VectorXd power = alloc.power_vector();
  FeasibilityReport report;
  report.min_rate_residual = Eigen::VectorXd::Zero(num_q);
  report.radar_sinr_residual = Eigen::VectorXd::Zero(num_k);
  report.radar_budget_residual = Eigen::VectorXd::Zero(num_k);

  double rate_scale = std::max(1.0, pb.bandwidth_hz);
  double worst = 0.0;

  report.common_cap_residual = alloc.a.sum() - min_common_rate(pb, power);
  worst = std::max(worst, report.common_cap_residual / rate_scale);

  for (int q = 0; q < num_q; ++q) {
    report.min_rate_residual[q] = pb.min_rate_bps[q] - alloc.a[q] - private_rate(pb, q, power);
    worst = std::max(worst, report.min_rate_residual[q] / rate_scale);
  }

  report.bs_budget_residual = alloc.p0 + alloc.p.sum() - pb.bs_power_budget_w;
  worst = std::max(worst, report.bs_budget_residual / pb.bs_power_budget_w);

  for (int k = 0; k < num_k; ++k) {
    report.radar_sinr_residual[k] = pb.radar_sinr_threshold - radar_sinr(pb, k, power);
    worst = std::max(worst, report.radar_sinr_residual[k] / pb.radar_sinr_threshold);
    report.radar_budget_residual[k] = alloc.pr[k] - pb.radar_power_budget_w;
    worst = std::max(worst, report.radar_budget_residual[k] / pb.radar_power_budget_w);
  }

  double most_negative = std::min({alloc.a.minCoeff(), alloc.p0, alloc.p.minCoeff(),
                                   num_k > 0 ? alloc.pr.minCoeff() : 0.0});
  report.nonnegativity_residual = std::max(0.0, -most_negative);
  worst = std::max(worst, report.nonnegativity_residual);

  report.max_violation = worst;
  report.feasible = worst <= tol;
  return report;
}

}  // namespace crcopt
