#pragma once

// Two-constituent finite-size periodic pattern:
//
//   V(z) = G(z - z1) sin^2(kappa1 (z - z1) / 2 + theta1)
//        + G(z - z2) sin^2(kappa2 (z - z2) / 2 + theta2),   G(u) = exp(-u^2 / 2 sigma^2)
//
// together with its positive-frequency complex form and local phase fields.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace moire {

struct ModelParams {
  double kappa1 = 1.0;  // rad/um
  double kappa2 = 1.0;  // rad/um
  double theta1 = 0.0;  // rad
  double theta2 = 0.0;  // rad
  double z1 = 0.0;      // um
  double z2 = 0.0;      // um
  double sigma = 1.0;   // um

  double delta_z() const { return z2 - z1; }
  double mean_z() const { return 0.5 * (z1 + z2); }
  double kappa() const { return 0.5 * (kappa1 + kappa2); }
  double delta_phi() const { return kappa() * delta_z(); }
  double delta_theta() const { return theta2 - theta1; }
  double n_periods() const;
  bool equal_kappa() const;
  bool equal_theta() const;

  /// Throws ParameterError unless sigma > 0 and both wavenumbers are finite and positive.
  void validate() const;

  /// Common-kappa configuration centred at zbar with the given relative phase Delta phi = kappa dz.
  static ModelParams symmetric(double kappa, double sigma, double delta_phi, double theta = 0.0,
                               double zbar = 0.0);
  /// Same, parametrised by the number of periods N_p = (2/pi) kappa sigma.
  static ModelParams from_periods(double kappa, double n_periods, double delta_phi,
                                  double theta = 0.0, double zbar = 0.0);
};

void to_json(nlohmann::json& j, const ModelParams& p);
void from_json(const nlohmann::json& j, ModelParams& p);

/// Uniform grid z_i = z0 + i dz, i = 0..n-1.
struct Grid {
  double z0 = 0.0;
  double dz = 1.0;
  std::size_t n = 0;

  double z(std::size_t i) const { return z0 + static_cast<double>(i) * dz; }
  double z_end() const { return z(n - 1); }

  static Grid spanning(double z_min, double z_max, std::size_t n);
};

/// 4096 points covering [min(z1,z2) - 6 sigma, max(z1,z2) + 6 sigma].
Grid default_grid(const ModelParams& params, std::size_t n = 4096);

struct SampledSignal {
  double z0 = 0.0;
  double dz = 1.0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double z(std::size_t i) const { return z0 + static_cast<double>(i) * dz; }
  Grid grid() const { return {z0, dz, values.size()}; }

  /// dz > 0, at least two finite samples.
  void validate() const;
};

/// CSV with a units comment line followed by "z,value".
void write_csv(std::ostream& os, const SampledSignal& s);
SampledSignal read_csv(std::istream& is);

struct PhaseProfile {
  double z0 = 0.0;
  double dz = 1.0;
  std::vector<double> phase;     // unwrapped, rad
  std::vector<double> gradient;  // rad/um
  std::vector<std::uint8_t> valid;
  bool singular = false;  // true if any point was masked

  std::size_t size() const { return phase.size(); }
  double z(std::size_t i) const { return z0 + static_cast<double>(i) * dz; }
};

double pattern_value(const ModelParams& params, double z);

SampledSignal generate_pattern(const ModelParams& params, const Grid& grid);

/// V+(z) = 1/2 e^{i kappa z} [e^{i phi1} G(z - z1) + e^{i phi2} G(z - z2)], phi_j = 2 theta_j - kappa z_j.
/// Satisfies V(z) = (G1 + G2)/2 - Re V+(z).  Requires kappa1 == kappa2.
std::vector<std::complex<double>> positive_frequency_part(const ModelParams& params,
                                                          const Grid& grid);

/// Phase and phase gradient of V+, unwrapped left to right. Points where |V+| vanishes
/// (Delta phi an odd multiple of pi at the midpoint) are masked rather than interpolated.
PhaseProfile local_phase(const ModelParams& params, const Grid& grid);

/// Closed-form dphi/dz at z.
double local_phase_gradient(const ModelParams& params, double z);

}  // namespace moire
