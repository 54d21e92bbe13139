#pragma once

// Unit system used throughout the library:
//
//   length       micrometre (um)
//   wavenumber   rad / um
//   time         microsecond (us)
//   magnetic     gauss (G)
//   potentials   stored divided by hbar, i.e. in rad / us
//
// Every public function takes and returns values in these units.

#include <numbers>

namespace moire::units {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// hbar / m for 87Rb [um^2/us]. CODATA 2018 hbar and m(87Rb) = 86.909180520 u.
inline constexpr double kHbarOverMassRb87 = 7.307375225e-4;

/// mu_B / hbar [rad / (us G)].
inline constexpr double kBohrMagnetonOverHbar = 8.794100059;

/// Standard gravity [um / us^2].
inline constexpr double kGravity = 9.80665e-6;

/// mu_0 / (2 pi) [G um / A]; the field of an infinite wire is this times I / r.
inline constexpr double kMu0Over2Pi = 2000.0;

/// Lande factor of the F = 2 hyperfine manifold of 87Rb.
inline constexpr double kLandeF2 = 0.5;

/// Number of constituent periods inside the 4 sigma envelope, (2/pi) kappa sigma.
constexpr double periods_from_kappa_sigma(double kappa_sigma) { return 2.0 * kappa_sigma / kPi; }
constexpr double kappa_sigma_from_periods(double n_periods) { return 0.5 * kPi * n_periods; }

}  // namespace moire::units
