#pragma once

// Wigner distributions of two-Gaussian superpositions and harmonic phase-space rotation.
//
//   W(x, k) = (1/pi) Int psi*(x + y) psi(x - y) exp(2 i k y) dy,   Int W dx dk = 1
//
// x in um, k in rad/um.  Harmonic evolution with frequency omega maps
//   (x, k) -> (x cos wt + (h k / w) sin wt,  k cos wt - (w x / h) sin wt),   h = hbar/m.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "moire/units.hpp"
#include "moire/wavepacket.hpp"

namespace moire {

struct WignerGrid {
  std::vector<double> x;       // um, uniform
  std::vector<double> p;       // rad/um, uniform
  std::vector<double> values;  // row-major, p index outer
  double norm = 0.0;           // Int W dx dp on the grid

  std::size_t nx() const { return x.size(); }
  std::size_t np() const { return p.size(); }
  double dx() const { return x[1] - x[0]; }
  double dp() const { return p[1] - p[0]; }
  double& at(std::size_t ip, std::size_t ix) { return values[ip * x.size() + ix]; }
  double at(std::size_t ip, std::size_t ix) const { return values[ip * x.size() + ix]; }

  double integral() const;
  std::vector<double> x_marginal() const;  // Int W dp
  std::vector<double> p_marginal() const;  // Int W dx
};

/// Uniform axes; n points each.
WignerGrid make_wigner_grid(double x_lo, double x_hi, double p_lo, double p_hi, std::size_t nx, std::size_t np);

/// Axes covering both packets by +-margin sigma in x and +-margin sigma_k in k.
WignerGrid auto_wigner_grid(const GaussianWavepacket& a, const GaussianWavepacket& b, std::size_t n = 512,
                            double margin = 6.0);

/// Wigner function of (a + b)/||a + b|| in closed form.  b may be a copy of a.
/// Throws ModelAssumptionError for different spins, ResolutionError when the cross-term
/// fringe wavelength is below 4 grid steps along either axis.
WignerGrid wigner_of_superposition(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid,
                                   unsigned jobs = 1);
/// Same object by trapezoidal quadrature of the defining integral.
WignerGrid wigner_numerical(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid,
                            unsigned jobs = 1);
/// Interference term only, 2 Re W_ab / ||a + b||^2.
WignerGrid wigner_cross_term(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid,
                             unsigned jobs = 1);

/// Harmonic evolution of a Wigner grid by omega * tau, as three FFT shears per step of at most
/// pi/4.  Throws ClippingError when the support (|W| > 1e-10 max) leaves the grid at any stage.
WignerGrid rotate_phase_space(const WignerGrid& w, double omega, double tau,
                              double hbar_over_m = units::kHbarOverMassRb87);

struct FringeInfo {
  double qx = 0.0, qp = 0.0;  // fringe wavevector, rad/um and um
  double count = 0.0;         // (2/pi) sqrt(q^T Sigma q), Sigma the envelope covariance
  double phase = 0.0;         // fringe phase at the envelope centre, rad
  double x_c = 0.0, p_c = 0.0;
};

/// Fringes of a cross-term grid by demodulating its 2D spectrum around the peak closest to
/// the direction (ref_qx, ref_qp).  A zero reference picks the dominant peak with qx >= 0.
FringeInfo fringe_analysis(const WignerGrid& cross, double ref_qx = 0.0, double ref_qp = 0.0);

struct RotationReport {
  double omega = 0.0, tau = 0.0;
  double l2_error = 0.0;       // || rotate(W0) - W(evolved) ||_2
  double linf_error = 0.0;
  double norm_before = 0.0, norm_after = 0.0;
  FringeInfo before, after;
  double count_rel_change = 0.0;
  double phase_change = 0.0;  // wrapped to (-pi, pi]
  double n_periods_before = 0.0, n_periods_after = 0.0;  // (2/pi) kappa sigma of the pair
  std::size_t n = 0;
};

void to_json(nlohmann::json& j, const FringeInfo& f);
void to_json(nlohmann::json& j, const RotationReport& r);

/// Wigner of the pair, rotated by omega tau, compared with the Wigner of the pair propagated
/// through the harmonic potential by evolve_quadratic.  The grid is centred on the phase-space
/// origin and sized so that the rotation stays on it.
RotationReport verify_rotation_theorem(const GaussianWavepacket& a, const GaussianWavepacket& b, double omega,
                                       double tau, double hbar_over_m = units::kHbarOverMassRb87,
                                       std::size_t n = 512, unsigned jobs = 1);

/// Row-major float64 little-endian values plus <path>.json with axes and norm.
void write_binary(const std::filesystem::path& path, const WignerGrid& w);
WignerGrid read_binary(const std::filesystem::path& path);
/// Long format x,p,W with a units line.
void write_csv(std::ostream& os, const WignerGrid& w);

}  // namespace moire
