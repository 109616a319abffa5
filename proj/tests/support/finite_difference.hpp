// Central finite differences used as the independent oracle for every
// analytic gradient in the project.
#pragma once

#include <Eigen/Dense>

#include <functional>

namespace crcopt::testing {

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step = 1e-6) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    double above = f(probe);
    probe[i] = x[i] - h;
    double below = f(probe);
    probe[i] = x[i];
    grad[i] = (above - below) / (2.0 * h);
  }
  return grad;
}

inline bool gradients_match(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                            double rel_tol = 1e-5) {
  double scale = std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
  return (analytic - numeric).lpNorm<Eigen::Infinity>() <= rel_tol * scale;
}

}  // namespace crcopt::testing
