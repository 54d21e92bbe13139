#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "moire/pattern.hpp"
#include "moire/spectral.hpp"

namespace moire {

struct EnvelopeFit {
  Envelope envelope;  // A, zbar, sigma (= sigma0), c
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  int iterations = 0;
};

/// Fringe model  A exp(-(z - zbar)^2 / 2 sbar^2) [1 + v sin(K_M z + phi)] + c  with K_M fixed.
struct FringeFit {
  double A = 0.0;
  double zbar = 0.0;
  double sigma = 0.0;  // sbar
  double v = 0.0;      // canonicalised to v >= 0
  double phi = 0.0;    // in [0, 2 pi)
  double c = 0.0;
  double K_M = 0.0;
  double residual_norm = 0.0;
  Eigen::MatrixXd covariance;  // order A, zbar, sigma, v, phi, c
  bool low_confidence = false;  // fewer than 2 fringes inside the envelope
  double fringes_in_envelope = 0.0;

  double model(double z) const;
};

/// v(T2) = v0/2 cos(a / T2^2 + phi0) + c
struct VisibilityFit {
  double v0 = 0.0;
  double a = 0.0;     // us^2
  double phi0 = 0.0;  // [0, 2 pi)
  double c = 0.0;
  double residual_norm = 0.0;
  Eigen::MatrixXd covariance;  // order v0, a, phi0, c
  /// (a, rss) of the distinct local minima found by the scan over a, best first.
  std::vector<std::pair<double, double>> basins;

  double model(double T2) const;
  double delta_phi(double T2) const { return a / (T2 * T2) + phi0; }
};

/// kappa(T2) = 2 pi a / sqrt(T2 + b)
struct KappaFit {
  double a = 0.0;  // um^-1 us^1/2
  double b = 0.0;  // us
  double residual_norm = 0.0;
  Eigen::MatrixXd covariance;  // order a, b

  double model(double T2) const;
};

struct FringeFitOptions {
  int starts = 8;          // phase multi-start
  std::uint64_t seed = 0;  // not used by the deterministic start grid, kept for API symmetry
};

struct VisibilityFitOptions {
  double a_min = 1e3;
  double a_max = 1e6;
  std::size_t a_steps = 0;  // 0: chosen from the phase resolution at the smallest T2
};

void to_json(nlohmann::json& j, const EnvelopeFit& f);
void to_json(nlohmann::json& j, const FringeFit& f);
void to_json(nlohmann::json& j, const VisibilityFit& f);
void to_json(nlohmann::json& j, const KappaFit& f);

EnvelopeFit fit_envelope(const SampledSignal& signal);
FringeFit fit_fringes(const SampledSignal& signal, double K_M, const FringeFitOptions& opts = {});
VisibilityFit fit_visibility_curve(const std::vector<double>& T2, const std::vector<double>& v,
                                   const VisibilityFitOptions& opts = {});
KappaFit fit_kappa_curve(const std::vector<double>& T2, const std::vector<double>& kappa);

// Synthetic CCD images.

struct Image {
  std::size_t rows = 0, cols = 0;
  double z0 = 0.0, dz = 1.0;  // along columns
  std::vector<double> data;   // row-major

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct CcdOptions {
  std::size_t rows = 32;
  double blur_sigma = 0.0;  // um, Gaussian blur along z
  /// Signal-to-noise ratio of the column-averaged profile: max|profile| / noise std.
  /// Infinity (or <= 0) means noiseless.
  double snr = 0.0;
};

Image synthetic_ccd(const SampledSignal& profile, const CcdOptions& opts, std::mt19937_64& rng);
/// Mean over rows, i.e. the 1D profile used for analysis.
SampledSignal column_profile(const Image& img);
SampledSignal gaussian_blur(const SampledSignal& s, double blur_sigma);

void write_image(const std::string& path_stem, const Image& img);

}  // namespace moire
