#include "moire/least_squares.hpp"

#include <algorithm>
#include <cmath>

namespace moire::lsq {

namespace {

Eigen::VectorXd project(Eigen::VectorXd p, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
  return p;
}

}  // namespace

Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& J, double rss) {
  const auto m = J.rows(), n = J.cols();
  const double s2 = m > n ? rss / static_cast<double>(m - n) : 0.0;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J.transpose() * J);
  return s2 * cod.pseudoInverse();
}

Result levenberg_marquardt(const ResidualFn& fn, const Eigen::VectorXd& p0, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Options& opts) {
  const Eigen::Index n = p0.size();
  Result res;
  Eigen::VectorXd p = project(p0, lower, upper);
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  fn(p, r, &J);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) {
    res.p = p;
    res.residuals = r;
    res.rss = cost;
    res.message = "non-finite residual at start";
    return res;
  }
  double lambda = opts.lambda0;
  Eigen::VectorXd rt;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd d = JtJ.diagonal().cwiseMax(1e-300);
    if ((g.array().abs() / (d.array().sqrt() * std::sqrt(std::max(cost, 1e-300)))).maxCoeff() < opts.gtol &&
        it > 0) {
      res.converged = true;
      res.message = "gradient below tolerance";
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * d;
      Eigen::VectorXd step = -A.ldlt().solve(g);
      if (!step.allFinite()) step = -A.completeOrthogonalDecomposition().solve(g);
      Eigen::VectorXd pt = project(p + step, lower, upper);
      fn(pt, rt, nullptr);
      const double ct = rt.squaredNorm();
      if (std::isfinite(ct) && ct <= cost) {
        const double rel_step = (pt - p).norm() / (p.norm() + 1e-300);
        const double rel_dec = (cost - ct) / (cost + 1e-300);
        p = pt;
        fn(p, r, &J);
        const bool small = rel_step < opts.xtol || rel_dec < opts.ftol || ct == 0.0;
        cost = r.squaredNorm();
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (small) {
          res.converged = true;
          res.message = "step or decrease below tolerance";
        }
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    if (!accepted) {
      res.converged = true;
      res.message = "no decreasing step (local minimum)";
      break;
    }
    if (res.converged) break;
  }
  if (it >= opts.max_iter) res.message = "iteration limit";
  res.iterations = it;
  res.p = p;
  res.residuals = r;
  res.rss = cost;
  res.covariance = covariance_from_jacobian(J, cost);
  (void)n;
  return res;
}

}  // namespace moire::lsq
