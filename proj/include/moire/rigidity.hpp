#pragma once

// K_M(kappa, dphi) surfaces, the measured T2 trajectory, plateau slopes and jump-height curves.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "moire/spectral.hpp"

namespace moire {

/// Phenomenological fits of the T2 dependence:
///   dphi(T2) = a / T2^2 + phi0,   kappa_i(T2) = 2 pi a_i / sqrt(T2 + b_i).
struct TrajectoryParams {
  double a = 163e3;  // us^2
  double phi0 = 1.3;
  double a1 = 0.175;  // um^-1 us^1/2
  double b1 = -56.0;  // us
  double a2 = 0.183;
  double b2 = -56.0;
  double n_periods = 5.61;
  // visibility model v0/2 cos(dphi) + c
  double v0 = 1.0;
  double c = 0.5;

  double delta_phi(double T2) const;
  double kappa1(double T2) const;
  double kappa2(double T2) const;
  double kappa(double T2) const { return 0.5 * (kappa1(T2) + kappa2(T2)); }
  double visibility(double T2) const;
  /// T2 values where dphi(T2) = pi(2n+1), ascending, restricted to [lo, hi].
  std::vector<double> jump_times(double lo, double hi) const;
};

void to_json(nlohmann::json& j, const TrajectoryParams& p);
void from_json(const nlohmann::json& j, TrajectoryParams& p);

struct Trajectory {
  std::vector<double> T2;     // us
  std::vector<double> kappa;  // rad/um, mean of the two constituents
  std::vector<double> kappa1, kappa2;
  std::vector<double> dphi;  // rad
  double n_periods = 0.0;

  std::size_t size() const { return T2.size(); }
  double sigma(std::size_t i) const;
  ModelParams model(std::size_t i) const;  // symmetric, theta = 0
};

/// Throws DomainError when T2 + b_i <= 0 anywhere on the grid.
Trajectory experimental_trajectory(const TrajectoryParams& params, const std::vector<double>& T2);
std::vector<double> linspace(double lo, double hi, std::size_t n);

struct TrajectoryScan {
  Trajectory trajectory;
  std::vector<double> K_M;
  std::vector<double> K_secondary;  // NaN when no secondary analytic peak >= 20% of the primary
  std::vector<int> lobe;
  std::vector<double> visibility;
  std::vector<std::uint8_t> ok;  // 0 where solve_km failed
};

TrajectoryScan scan_trajectory(const TrajectoryParams& params, const std::vector<double>& T2,
                               unsigned jobs = 1);

struct Jump {
  std::size_t index = 0;  // jump lies between T2[index] and T2[index + 1]
  double T2_lo = 0.0, T2_hi = 0.0;
  double K_before = 0.0, K_after = 0.0;
};

struct Plateau {
  double T2_lo = 0.0, T2_hi = 0.0;
  std::size_t n_points = 0;
  double K_min = 0.0, K_max = 0.0, K_mean = 0.0;
  double spread() const { return (K_max - K_min) / K_mean; }
};

/// Jumps are changes of the |cos| lobe that holds the maximum.
std::vector<Jump> find_jumps(const TrajectoryScan& scan);
std::vector<Plateau> plateaus(const TrajectoryScan& scan, const std::vector<Jump>& jumps);
/// Indices i where visibility[i] is a strict discrete local minimum.
std::vector<std::size_t> visibility_minima(const TrajectoryScan& scan);

void write_csv(std::ostream& os, const TrajectoryScan& scan);

struct SurfaceMap {
  std::vector<double> kappa_axis;
  std::vector<double> dphi_axis;
  std::vector<double> K_M;  // row-major, dphi index outer
  std::vector<std::uint8_t> masked;
  double n_periods = 0.0;

  double at(std::size_t i_dphi, std::size_t j_kappa) const { return K_M[i_dphi * kappa_axis.size() + j_kappa]; }
};

/// K_M from solve_km at each cell with sigma = pi N_p / 2 kappa.  Solver failures are masked.
SurfaceMap km_surface(const std::vector<double>& kappa_axis, const std::vector<double>& dphi_axis,
                      double n_periods, unsigned jobs = 1);

/// Same surface with kappa1 / kappa2 = ratio (mean kappa on the axis), evaluated by
/// numerical_spectrum on generated patterns.
SurfaceMap km_surface_mixed(const std::vector<double>& kappa_axis, const std::vector<double>& dphi_axis,
                            double n_periods, double kappa_ratio, unsigned jobs = 1);

/// Long format kappa,dphi,K_M,masked; with overlay set, an extra trajectory_kappa column
/// holding overlay(dphi).
void write_csv(std::ostream& os, const SurfaceMap& map,
               const std::function<double(double)>& overlay = nullptr);

/// kappa along kappa0 sqrt(dphi^2 + pi^2 N_p^2).
double rigidity_kappa(double kappa0, double dphi, double n_periods);
/// sqrt((2 sigma)^2 + dz^2) with sigma = pi N_p / 2 kappa, dz = dphi / kappa.
double rigidity_width(double kappa, double dphi, double n_periods);

/// dK_M/d(dphi) at dphi = 2 pi n along kappa(dphi):  kappa' - 2 pi n kappa / ((2 pi n)^2 + pi^2 N_p^2).
/// kappa' by centred difference with step 1e-4 rad.  n = 0 gives kappa'.
double plateau_slope(const std::function<double(double)>& kappa_fn, double n_periods, int n);

struct JumpCurves {
  std::vector<int> n_list;
  std::vector<double> n_periods;
  std::vector<std::vector<double>> rel_height;  // [n][N_p] dK_M / kappa
  std::vector<double> dphi_of_n;                // pi (2n + 1)
};

JumpCurves jump_vs_periods(const std::vector<int>& n_list, const std::vector<double>& n_periods);
void write_csv(std::ostream& os, const JumpCurves& c);

struct UniversalCurve {
  double n_periods = 0.0;
  std::vector<double> dphi;
  std::vector<double> k_dz;  // K_M dz
  std::vector<std::uint8_t> degenerate;
};

UniversalCurve universal_curve(double n_periods, const std::vector<double>& dphi);
void write_csv(std::ostream& os, const UniversalCurve& c);

}  // namespace moire
