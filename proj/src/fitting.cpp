#include "moire/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/least_squares.hpp"
#include "moire/units.hpp"

namespace moire {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using units::kPi;
using units::kTwoPi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_2pi(double x) {
  x = std::fmod(x, kTwoPi);
  if (x < 0.0) x += kTwoPi;
  if (x >= kTwoPi) x = 0.0;
  return x;
}

nlohmann::json cov_json(const MatrixXd& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < c.cols(); ++k) row.push_back(c(i, k));
    rows.push_back(row);
  }
  return rows;
}

double stderr_of(const MatrixXd& c, Eigen::Index i) {
  return (c.rows() > i && c(i, i) > 0.0) ? std::sqrt(c(i, i)) : 0.0;
}

// Gaussian + offset, parameters (A, zbar, sigma, c).
lsq::Result envelope_lm(const SampledSignal& s, const VectorXd& p0) {
  const std::size_t n = s.size();
  auto fn = [&](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), 4);
    const double A = p[0], zb = p[1], sg = p[2], c = p[3];
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (s.z(i) - zb) / sg;
      const double g = std::exp(-0.5 * u * u);
      const auto k = static_cast<Eigen::Index>(i);
      r[k] = A * g + c - s.values[i];
      if (J) {
        (*J)(k, 0) = g;
        (*J)(k, 1) = A * g * u / sg;
        (*J)(k, 2) = A * g * u * u / sg;
        (*J)(k, 3) = 1.0;
      }
    }
  };
  const double span = s.z(n - 1) - s.z0;
  VectorXd lo(4), hi(4);
  lo << -kInf, s.z0 - span, 0.25 * s.dz, -kInf;
  hi << kInf, s.z(n - 1) + span, 10.0 * span, kInf;
  return lsq::levenberg_marquardt(fn, p0, lo, hi);
}

}  // namespace

double FringeFit::model(double z) const {
  const double u = (z - zbar) / sigma;
  return A * std::exp(-0.5 * u * u) * (1.0 + v * std::sin(K_M * z + phi)) + c;
}

double VisibilityFit::model(double T2) const { return 0.5 * v0 * std::cos(delta_phi(T2)) + c; }

double KappaFit::model(double T2) const { return kTwoPi * a / std::sqrt(T2 + b); }

void to_json(nlohmann::json& j, const EnvelopeFit& f) {
  j = nlohmann::json{{"A", f.envelope.A},
                     {"zbar", f.envelope.zbar},
                     {"sigma0", f.envelope.sigma},
                     {"c", f.envelope.c},
                     {"uncertainty",
                      {{"A", stderr_of(f.covariance, 0)},
                       {"zbar", stderr_of(f.covariance, 1)},
                       {"sigma0", stderr_of(f.covariance, 2)},
                       {"c", stderr_of(f.covariance, 3)}}},
                     {"residual_norm", f.residual_norm},
                     {"covariance", cov_json(f.covariance)}};
}

void to_json(nlohmann::json& j, const FringeFit& f) {
  j = nlohmann::json{{"A", f.A},
                     {"zbar", f.zbar},
                     {"sigma", f.sigma},
                     {"v", f.v},
                     {"phi", f.phi},
                     {"c", f.c},
                     {"K_M", f.K_M},
                     {"uncertainty",
                      {{"A", stderr_of(f.covariance, 0)},
                       {"zbar", stderr_of(f.covariance, 1)},
                       {"sigma", stderr_of(f.covariance, 2)},
                       {"v", stderr_of(f.covariance, 3)},
                       {"phi", stderr_of(f.covariance, 4)},
                       {"c", stderr_of(f.covariance, 5)}}},
                     {"residual_norm", f.residual_norm},
                     {"low_confidence", f.low_confidence},
                     {"fringes_in_envelope", f.fringes_in_envelope},
                     {"covariance", cov_json(f.covariance)}};
}

void to_json(nlohmann::json& j, const VisibilityFit& f) {
  nlohmann::json basins = nlohmann::json::array();
  for (const auto& [a, rss] : f.basins) basins.push_back({{"a", a}, {"rss", rss}});
  j = nlohmann::json{{"v0", f.v0},
                     {"a", f.a},
                     {"phi0", f.phi0},
                     {"c", f.c},
                     {"uncertainty",
                      {{"v0", stderr_of(f.covariance, 0)},
                       {"a", stderr_of(f.covariance, 1)},
                       {"phi0", stderr_of(f.covariance, 2)},
                       {"c", stderr_of(f.covariance, 3)}}},
                     {"residual_norm", f.residual_norm},
                     {"basins", basins},
                     {"covariance", cov_json(f.covariance)}};
}

void to_json(nlohmann::json& j, const KappaFit& f) {
  j = nlohmann::json{{"a", f.a},
                     {"b", f.b},
                     {"uncertainty", {{"a", stderr_of(f.covariance, 0)}, {"b", stderr_of(f.covariance, 1)}}},
                     {"residual_norm", f.residual_norm},
                     {"covariance", cov_json(f.covariance)}};
}

EnvelopeFit fit_envelope(const SampledSignal& s) {
  s.validate();
  const std::size_t n = s.size();
  if (n < 8) throw SamplingError("fit_envelope needs at least 8 samples");
  const std::size_t edge = std::max<std::size_t>(1, n / 20);
  double left = 0.0, right = 0.0;
  for (std::size_t i = 0; i < edge; ++i) {
    left += s.values[i];
    right += s.values[n - 1 - i];
  }
  const double c0 = std::min(left, right) / static_cast<double>(edge);
  double w = 0.0, zw = 0.0, vmax = -kInf;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::max(0.0, s.values[i] - c0);
    w += y;
    zw += y * s.z(i);
    vmax = std::max(vmax, s.values[i]);
  }
  if (!(w > 0.0)) throw FitError("fit_envelope: no positive lobe above the baseline");
  const double zb0 = zw / w;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::max(0.0, s.values[i] - c0);
    var += y * (s.z(i) - zb0) * (s.z(i) - zb0);
  }
  const double sg0 = std::max(std::sqrt(var / w), 2.0 * s.dz);
  // area-matched amplitude is robust to fringes; peak-matched is exact for a bare Gaussian
  const double A_area = w * s.dz / (sg0 * std::sqrt(kTwoPi));

  lsq::Result best;
  bool have = false;
  for (const double A0 : {A_area, vmax - c0}) {
    for (const double sscale : {1.0, 0.7}) {
      VectorXd p0(4);
      p0 << A0, zb0, sg0 * sscale, c0;
      auto r = envelope_lm(s, p0);
      if (!std::isfinite(r.rss)) continue;
      if (!have || r.rss < best.rss) {
        best = r;
        have = true;
      }
    }
  }
  if (!have || !best.p.allFinite())
    throw FitError("fit_envelope: no finite solution (" + (have ? best.message : "all starts failed") + ")");
  if (!best.converged)
    throw FitError("fit_envelope: did not converge after " + std::to_string(best.iterations) +
                   " iterations (" + best.message + ", rss " + fmt_double(best.rss) + ")");
  EnvelopeFit out;
  out.envelope = {best.p[0], best.p[1], std::abs(best.p[2]), best.p[3]};
  out.covariance = best.covariance;
  out.residual_norm = std::sqrt(best.rss);
  out.iterations = best.iterations;
  return out;
}

FringeFit fit_fringes(const SampledSignal& s, double K, const FringeFitOptions& opts) {
  s.validate();
  if (!(K > 0.0) || !std::isfinite(K)) throw ParameterError("fit_fringes: K_M must be > 0");
  const std::size_t n = s.size();
  const double zr = 0.5 * (s.z0 + s.z(n - 1));
  const auto env = fit_envelope(s).envelope;

  // linear solve for the fringe quadrature amplitudes given the envelope
  double SS = 0, SC = 0, CC = 0, YS = 0, YC = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (s.z(i) - env.zbar) / env.sigma;
    const double g = env.A * std::exp(-0.5 * u * u);
    const double x = K * (s.z(i) - zr);
    const double gs = g * std::sin(x), gc = g * std::cos(x);
    const double y = s.values[i] - env.c - g;
    SS += gs * gs;
    SC += gs * gc;
    CC += gc * gc;
    YS += y * gs;
    YC += y * gc;
  }
  const double det = SS * CC - SC * SC;
  double P = 0.0, Q = 0.0;
  if (std::abs(det) > 1e-300) {
    P = (YS * CC - YC * SC) / det;
    Q = (YC * SS - YS * SC) / det;
  }
  const double v_lin = std::min(1.0, std::hypot(P, Q));
  const double phi_lin = std::atan2(Q, P);

  auto fn = [&](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), 6);
    const double A = p[0], zb = p[1], sg = p[2], v = p[3], ph = p[4], c = p[5];
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (s.z(i) - zb) / sg;
      const double g = std::exp(-0.5 * u * u);
      const double x = K * (s.z(i) - zr) + ph;
      const double sn = std::sin(x), cs = std::cos(x);
      const double b = 1.0 + v * sn;
      const auto k = static_cast<Eigen::Index>(i);
      r[k] = A * g * b + c - s.values[i];
      if (J) {
        (*J)(k, 0) = g * b;
        (*J)(k, 1) = A * g * b * u / sg;
        (*J)(k, 2) = A * g * b * u * u / sg;
        (*J)(k, 3) = A * g * sn;
        (*J)(k, 4) = A * g * v * cs;
        (*J)(k, 5) = 1.0;
      }
    }
  };
  const double span = s.z(n - 1) - s.z0;
  VectorXd lo(6), hi(6);
  lo << -kInf, s.z0 - span, 0.25 * s.dz, -2.0, -kInf, -kInf;
  hi << kInf, s.z(n - 1) + span, 10.0 * span, 2.0, kInf, kInf;

  lsq::Result best;
  bool have = false;
  const int starts = std::max(1, opts.starts);
  for (int k = 0; k < starts; ++k) {
    VectorXd p0(6);
    const double ph0 = phi_lin + kTwoPi * k / starts;
    p0 << env.A, env.zbar, env.sigma, std::max(0.05, v_lin), ph0, env.c;
    auto r = lsq::levenberg_marquardt(fn, p0, lo, hi);
    if (!std::isfinite(r.rss)) continue;
    if (!have || r.rss < best.rss) {
      best = r;
      have = true;
    }
  }
  if (!have) throw FitError("fit_fringes: every start produced a non-finite residual");
  if (!best.converged)
    throw FitError("fit_fringes: did not converge (" + best.message + ")");

  FringeFit f;
  f.A = best.p[0];
  f.zbar = best.p[1];
  f.sigma = std::abs(best.p[2]);
  f.v = best.p[3];
  double ph = best.p[4] - K * zr;
  if (f.v < 0.0) {
    f.v = -f.v;
    ph += kPi;
  }
  f.phi = wrap_2pi(ph);
  f.c = best.p[5];
  f.K_M = K;
  f.residual_norm = std::sqrt(best.rss);
  f.covariance = best.covariance;
  f.fringes_in_envelope = units::periods_from_kappa_sigma(K * f.sigma);
  f.low_confidence = f.fringes_in_envelope < 2.0;
  return f;
}

VisibilityFit fit_visibility_curve(const std::vector<double>& T2, const std::vector<double>& v,
                                   const VisibilityFitOptions& opts) {
  const std::size_t n = T2.size();
  if (n != v.size()) throw ParameterError("fit_visibility_curve: size mismatch");
  if (n < 8) throw ParameterError("fit_visibility_curve needs at least 8 points");
  for (std::size_t i = 0; i < n; ++i)
    if (!(T2[i] > 0.0) || !std::isfinite(v[i])) throw ParameterError("fit_visibility_curve: bad point");
  if (!(opts.a_max > opts.a_min) || !(opts.a_min > 0.0))
    throw ParameterError("fit_visibility_curve: need 0 < a_min < a_max");

  const double tmin = *std::min_element(T2.begin(), T2.end());
  std::size_t steps = opts.a_steps;
  if (steps == 0) {
    const double da = 0.05 * tmin * tmin;  // 0.05 rad of phase at the smallest T2
    steps = static_cast<std::size_t>(std::ceil((opts.a_max - opts.a_min) / da)) + 1;
    steps = std::clamp<std::size_t>(steps, 64, 200000);
  }

  // variable projection: for fixed a the model is linear in (p, q, c)
  auto project = [&](double a, Eigen::Vector3d* coef) {
    MatrixXd M(static_cast<Eigen::Index>(n), 3);
    VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double x = a / (T2[i] * T2[i]);
      const auto k = static_cast<Eigen::Index>(i);
      M(k, 0) = std::cos(x);
      M(k, 1) = std::sin(x);
      M(k, 2) = 1.0;
      y[k] = v[i];
    }
    Eigen::Vector3d c = M.colPivHouseholderQr().solve(y);
    if (coef) *coef = c;
    return (M * c - y).squaredNorm();
  };
  std::vector<double> as(steps), rss(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    as[i] = opts.a_min + (opts.a_max - opts.a_min) * static_cast<double>(i) / static_cast<double>(steps - 1);
    rss[i] = project(as[i], nullptr);
  }
  std::vector<std::pair<double, double>> minima;
  for (std::size_t i = 0; i < steps; ++i) {
    const bool l = i == 0 || rss[i] <= rss[i - 1];
    const bool r = i + 1 == steps || rss[i] <= rss[i + 1];
    if (l && r) minima.emplace_back(as[i], rss[i]);
  }
  std::sort(minima.begin(), minima.end(), [](auto& x, auto& y) { return x.second < y.second; });
  if (minima.empty()) throw FitError("fit_visibility_curve: scan found no minimum");

  auto fn = [&](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), 4);
    for (std::size_t i = 0; i < n; ++i) {
      const double it2 = 1.0 / (T2[i] * T2[i]);
      const double x = p[1] * it2 + p[2];
      const auto k = static_cast<Eigen::Index>(i);
      r[k] = 0.5 * p[0] * std::cos(x) + p[3] - v[i];
      if (J) {
        (*J)(k, 0) = 0.5 * std::cos(x);
        (*J)(k, 1) = -0.5 * p[0] * std::sin(x) * it2;
        (*J)(k, 2) = -0.5 * p[0] * std::sin(x);
        (*J)(k, 3) = 1.0;
      }
    }
  };
  VectorXd lo(4), hi(4);
  lo << -kInf, opts.a_min, -kInf, -kInf;
  hi << kInf, opts.a_max, kInf, kInf;

  lsq::Result best;
  bool have = false;
  const std::size_t refine = std::min<std::size_t>(minima.size(), 8);
  std::vector<std::pair<double, double>> basins;
  for (std::size_t b = 0; b < refine; ++b) {
    Eigen::Vector3d c;
    project(minima[b].first, &c);
    VectorXd p0(4);
    p0 << 2.0 * std::hypot(c[0], c[1]), minima[b].first, -std::atan2(c[1], c[0]), c[2];
    auto r = lsq::levenberg_marquardt(fn, p0, lo, hi);
    if (!std::isfinite(r.rss)) continue;
    basins.emplace_back(r.p[1], r.rss);
    if (!have || r.rss < best.rss) {
      best = r;
      have = true;
    }
  }
  if (!have) throw FitError("fit_visibility_curve: refinement failed in every basin");

  VisibilityFit f;
  f.v0 = best.p[0];
  f.a = best.p[1];
  double ph = best.p[2];
  if (f.v0 < 0.0) {
    f.v0 = -f.v0;
    ph += kPi;
  }
  f.phi0 = wrap_2pi(ph);
  f.c = best.p[3];
  f.residual_norm = std::sqrt(best.rss);
  f.covariance = best.covariance;
  std::sort(basins.begin(), basins.end(), [](auto& x, auto& y) { return x.second < y.second; });
  // merge refinements that landed in the same basin
  for (const auto& bsn : basins) {
    bool dup = false;
    for (const auto& kept : f.basins)
      if (std::abs(kept.first - bsn.first) < 1e-6 * std::max(1.0, std::abs(bsn.first))) dup = true;
    if (!dup) f.basins.push_back(bsn);
  }
  return f;
}

KappaFit fit_kappa_curve(const std::vector<double>& T2, const std::vector<double>& kappa) {
  const std::size_t n = T2.size();
  if (n != kappa.size()) throw ParameterError("fit_kappa_curve: size mismatch");
  if (n < 3) throw ParameterError("fit_kappa_curve needs at least 3 points");
  for (std::size_t i = 0; i < n; ++i)
    if (!(kappa[i] > 0.0) || !std::isfinite(T2[i])) throw ParameterError("fit_kappa_curve: bad point");

  // (2 pi / kappa)^2 = T2 / a^2 + b / a^2 is linear in T2
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::pow(kTwoPi / kappa[i], 2);
    st += T2[i];
    sy += y;
    stt += T2[i] * T2[i];
    sty += T2[i] * y;
  }
  const double dn = static_cast<double>(n);
  const double slope = (dn * sty - st * sy) / (dn * stt - st * st);
  const double icpt = (sy - slope * st) / dn;
  if (!(slope > 0.0)) throw FitError("fit_kappa_curve: kappa does not decrease with T2");
  const double tmin = *std::min_element(T2.begin(), T2.end());
  const double b_floor = -tmin + 1e-9 * std::max(1.0, std::abs(tmin));
  VectorXd p0(2);
  p0 << 1.0 / std::sqrt(slope), std::max(icpt / slope, b_floor + 1e-6);

  auto fn = [&](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double q = 1.0 / std::sqrt(T2[i] + p[1]);
      const auto k = static_cast<Eigen::Index>(i);
      r[k] = kTwoPi * p[0] * q - kappa[i];
      if (J) {
        (*J)(k, 0) = kTwoPi * q;
        (*J)(k, 1) = -0.5 * kTwoPi * p[0] * q * q * q;
      }
    }
  };
  VectorXd lo(2), hi(2);
  lo << 0.0, b_floor;
  hi << kInf, kInf;
  auto r = lsq::levenberg_marquardt(fn, p0, lo, hi);
  if (!r.p.allFinite() || !std::isfinite(r.rss)) throw FitError("fit_kappa_curve: non-finite solution");
  if (!r.converged) throw FitError("fit_kappa_curve: did not converge (" + r.message + ")");
  KappaFit f;
  f.a = r.p[0];
  f.b = r.p[1];
  f.residual_norm = std::sqrt(r.rss);
  f.covariance = r.covariance;
  return f;
}

SampledSignal gaussian_blur(const SampledSignal& s, double blur_sigma) {
  if (!(blur_sigma > 0.0)) return s;
  const double h = blur_sigma / s.dz;
  const auto half = static_cast<long>(std::ceil(5.0 * h));
  std::vector<double> ker(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (long k = -half; k <= half; ++k) {
    const double w = std::exp(-0.5 * (k / h) * (k / h));
    ker[static_cast<std::size_t>(k + half)] = w;
    sum += w;
  }
  for (double& w : ker) w /= sum;
  SampledSignal out = s;
  const auto n = static_cast<long>(s.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -half; k <= half; ++k) {
      const long j = i + k;
      if (j >= 0 && j < n) acc += ker[static_cast<std::size_t>(k + half)] * s.values[static_cast<std::size_t>(j)];
    }
    out.values[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

Image synthetic_ccd(const SampledSignal& profile, const CcdOptions& opts, std::mt19937_64& rng) {
  profile.validate();
  if (opts.rows == 0) throw ParameterError("synthetic_ccd: rows must be > 0");
  const SampledSignal p = gaussian_blur(profile, opts.blur_sigma);
  Image img;
  img.rows = opts.rows;
  img.cols = p.size();
  img.z0 = p.z0;
  img.dz = p.dz;
  img.data.resize(img.rows * img.cols);
  double peak = 0.0;
  for (double v : p.values) peak = std::max(peak, std::abs(v));
  const bool noisy = opts.snr > 0.0 && std::isfinite(opts.snr);
  const double pix_sigma = noisy ? peak / opts.snr * std::sqrt(static_cast<double>(opts.rows)) : 0.0;
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t r = 0; r < img.rows; ++r)
    for (std::size_t c = 0; c < img.cols; ++c)
      img.at(r, c) = p.values[c] + (noisy ? pix_sigma * nd(rng) : 0.0);
  return img;
}

SampledSignal column_profile(const Image& img) {
  if (img.rows == 0 || img.cols < 2) throw SamplingError("column_profile: empty image");
  SampledSignal s{img.z0, img.dz, std::vector<double>(img.cols, 0.0)};
  for (std::size_t r = 0; r < img.rows; ++r)
    for (std::size_t c = 0; c < img.cols; ++c) s.values[c] += img.at(r, c);
  for (double& v : s.values) v /= static_cast<double>(img.rows);
  return s;
}

void write_image(const std::string& stem, const Image& img) {
  {
    std::ofstream f(stem + ".bin", std::ios::binary);
    if (!f) throw ConfigError("cannot write " + stem + ".bin");
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(double)));
  }
  nlohmann::json side{{"format", "float64 row-major little-endian"},
                      {"rows", img.rows},
                      {"cols", img.cols},
                      {"z0", img.z0},
                      {"dz", img.dz},
                      {"units", {{"z", "um"}, {"value", "dimensionless"}}}};
  write_json_file(stem + ".json", side);
}

}  // namespace moire
