#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace moire::lsq {

/// r(p) and, when J != nullptr, the Jacobian dr/dp (m x n).
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J)>;

struct Options {
  int max_iter = 500;
  double ftol = 1e-15;  // relative cost decrease
  double xtol = 1e-14;  // relative step
  double gtol = 1e-14;  // scaled gradient
  double lambda0 = 1e-3;
};

struct Result {
  Eigen::VectorXd p;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1, s^2 = rss / (m - n)
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling; parameters are projected onto
/// [lower, upper] after every trial step.
Result levenberg_marquardt(const ResidualFn& fn, const Eigen::VectorXd& p0, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Options& opts = {});

Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& J, double rss);

}  // namespace moire::lsq
