#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "moire/pattern.hpp"

namespace moire {

/// Gaussian-plus-offset envelope A exp(-(z - zbar)^2 / 2 sigma^2) + c.
struct Envelope {
  double A = 0.0;
  double zbar = 0.0;
  double sigma = 1.0;
  double c = 0.0;
  double operator()(double z) const;
};

struct SpectralPeak {
  double K = 0.0;       // rad/um
  double height = 0.0;  // same scale as SpectralResult::aft
  double relative_intensity = 1.0;
};

struct SpectralResult {
  std::vector<double> k_grid;  // rad/um, K >= 0
  std::vector<double> aft;     // normalised so a unit-contrast pattern peaks near the analytic AFT
  SpectralPeak primary;
  std::optional<SpectralPeak> secondary;  // only when relative intensity >= threshold
  std::optional<SpectralPeak> runner_up;  // second local maximum regardless of threshold
  double bin_width = 0.0;  // rad/um, spacing of k_grid
  double cutoff = 0.0;     // rad/um, bins below are zeroed
  double envelope_sigma = 0.0;
  bool envelope_fitted = false;
};

struct SpectrumOptions {
  enum class Detrend { FittedGaussian, Mean, None };
  Detrend detrend = Detrend::FittedGaussian;
  /// false: cutoff wavenumber 1/(f sigma0).  true: 2 pi/(f sigma0), i.e. the
  /// "1/(f sigma0)" read as cycles per um.
  bool cutoff_cycles = false;
  double cutoff_factor = 0.9;
  std::size_t padding = 8;
  double secondary_threshold = 0.20;
};

void to_json(nlohmann::json& j, const SpectralPeak& p);
/// Peak record only: {K_M, height, secondary?, relative_intensity, ...}.
nlohmann::json peak_record(const SpectralResult& r);
void write_csv(std::ostream& os, const SpectralResult& r);

/// exp(-sigma^2 (K - kappa)^2 / 2) |cos(K dz / 2 - dtheta)|.  With theta1 == theta2 this is
/// exp(...) |cos(K dphi / 2 kappa)|.  Requires kappa1 == kappa2.
double analytic_aft(const ModelParams& params, double K);

/// Same, as a function of the dimensionless product x = K dz at fixed N_p and dphi.
double aft_fixed_dz(double n_periods, double delta_phi, double delta_theta, double k_dz);

/// FFT magnitude of a sampled pattern with the envelope removed and low wavenumbers cut.
/// The envelope used for subtraction is fitted internally (per opts.detrend); envelope_sigma
/// only sets the cutoff.
SpectralResult numerical_spectrum(const SampledSignal& signal, double envelope_sigma,
                                  const SpectrumOptions& opts = {});
/// Subtracts the given envelope; its sigma sets the cutoff.
SpectralResult numerical_spectrum(const SampledSignal& signal, const Envelope& envelope,
                                  const SpectrumOptions& opts = {});

struct PeakSolve {
  double K_M = 0.0;  // rad/um
  int branch_n = 0;  // round(dphi / 2 pi)
  bool degenerate = false;
  double residual = 0.0;          // |K - kappa + (dz / 2 sigma^2) tan(.)| / kappa
  std::optional<double> K_other;  // second solution when degenerate
  double height = 0.0;            // AFT at K_M
  int lobe = 0;                   // index m of the |cos| lobe holding the maximum
};

void to_json(nlohmann::json& j, const PeakSolve& p);

/// Global maximum of analytic_aft via the stationarity condition
///   K = kappa - (dz / 2 sigma^2) tan(K dz / 2 - dtheta),
/// solved lobe by lobe of |cos| with bracketed Newton.  Requires kappa sigma > 1.
PeakSolve solve_km(const ModelParams& params);

/// Peak splitting dK at dphi = pi(2n+1):  dK = (pi(2n+1) / sigma^2 kappa) cot(dK pi(2n+1) / 4 kappa).
double jump_height(int n, double kappa, double sigma);

struct FixedDzSolve {
  double k_dz = 0.0;
  bool degenerate = false;
  std::optional<double> k_dz_other;
  double height = 0.0;
};

/// K_M dz at the global maximum of aft_fixed_dz.
FixedDzSolve solve_km_fixed_dz_full(double n_periods, double delta_phi, double delta_theta);
double solve_km_fixed_dz(double n_periods, double delta_phi, double delta_theta);

/// Quantities of a solved |cos|-lobe problem, exposed for diagnostics and tests.
namespace detail {
struct LobeMax {
  double K;
  double log_value;
  int lobe;
};
/// All lobe maxima of exp(-s^2 (K - c)^2 / 2) |cos(beta K - dtheta)|, beta > 0, sorted by value.
std::vector<LobeMax> lobe_maxima(double c, double s, double beta, double dtheta);
}  // namespace detail

}  // namespace moire
