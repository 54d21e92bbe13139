#pragma once

// Gaussian wavepackets under piecewise-quadratic potentials and the interferometer sequence.
//
//   psi(z) = w (2 pi s^2)^(-1/4) exp(-(z - q)^2 / 4 s^2 + i alpha (z - q)^2 / 2 + i k (z - q) + i phi)
//
// Potentials are stored divided by hbar (rad/us), z is the distance below the chip, gravity
// points to +z.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "moire/pattern.hpp"
#include "moire/units.hpp"

namespace moire {

struct GaussianWavepacket {
  double center = 0.0;        // um
  double momentum = 0.0;      // k, rad/um
  double width = 1.0;         // sigma of |psi|^2, um
  double quad_phase = 0.0;    // alpha, rad/um^2
  double global_phase = 0.0;  // rad
  int spin = 1;               // 1 -> m_F = 1, 2 -> m_F = 2
  double weight = 1.0;
  int path = -1;  // 0 = a, 1 = b after the splitting pulse

  /// a = 1/(4 s^2) - i alpha / 2
  std::complex<double> a() const;
  void set_a(std::complex<double> a);
  std::complex<double> operator()(double z) const;
};

void to_json(nlohmann::json& j, const GaussianWavepacket& w);
void from_json(const nlohmann::json& j, GaussianWavepacket& w);

/// v0 + v1 (z - z_ref) + v2 (z - z_ref)^2 / 2, in rad/us.
struct QuadraticPotential {
  double z_ref = 0.0;
  double v0 = 0.0, v1 = 0.0, v2 = 0.0;
  double operator()(double z) const;
};

/// Free flight for dt >= 0 (uniform gravity when enabled).
GaussianWavepacket evolve_free(const GaussianWavepacket& wp, double dt, bool gravity = false,
                               double hbar_over_m = units::kHbarOverMassRb87);

/// Exact propagation through a quadratic potential.  With scale_length set, throws
/// StepSizeError when the centre moves more than 0.1 scale_length.
GaussianWavepacket evolve_quadratic(const GaussianWavepacket& wp, double dt, const QuadraticPotential& v,
                                    double hbar_over_m = units::kHbarOverMassRb87,
                                    double scale_length = 0.0);

/// Instantaneous two-level rotation |1> -> c|1> - s|2>, |2> -> s|1> + c|2>, c = cos(angle/2).
/// Identical branches are merged coherently, vanishing ones dropped.
std::vector<GaussianWavepacket> apply_rf_pulse(const std::vector<GaussianWavepacket>& branches, double angle);

/// <a|b>, including weights and global phases.
std::complex<double> overlap(const GaussianWavepacket& a, const GaussianWavepacket& b);

struct ConservationRecord {
  double t = 0.0;  // us
  std::string label;
  int spin = 0;  // spin of the pair, 0 for a mixed pair
  double Gamma = 0.0;  // from the overlap integral
  double chi = 0.0;
  double Gamma_formula = 0.0;  // sqrt((dz/2s)^2 + (kappa s)^2) with the mean width
  double kappa = 0.0;          // alpha dz - dk
  double sigma = 0.0;
  double delta_z = 0.0;
  double delta_k = 0.0;
  double z_mean = 0.0;
  double kappa_sigma = 0.0;
  double n_periods = 0.0;
  double width_mismatch = 0.0;  // |s_b - s_a| / mean
  // free-flight focus of the pair, referred to the record time
  double t_focus = 0.0;   // absolute, us
  double sigma_m = 0.0;   // um
  double xi = 0.0;        // 2 sigma_m^2 / (hbar/m T_f)
  double d_focus = 0.0;   // dz at the focus, um
  double kappa_xi0 = 0.0; // d / (hbar/m T_f)
};

void to_json(nlohmann::json& j, const ConservationRecord& r);

/// Record for a same-spin pair.  Throws ModelAssumptionError when the widths differ by more
/// than width_tol relative, or when the spins differ and require_same_spin is set.
ConservationRecord conservation_check(const GaussianWavepacket& a, const GaussianWavepacket& b,
                                      double hbar_over_m = units::kHbarOverMassRb87,
                                      double width_tol = 1e-6, bool require_same_spin = true);
/// Same quantities with no width or spin precondition.
ConservationRecord pair_record(const GaussianWavepacket& a, const GaussianWavepacket& b, double t,
                               double hbar_over_m = units::kHbarOverMassRb87);

/// Field of three chip wires (centre factor X, outer wires -1 at +-pitch) plus bias and bias gradient:
///   B_y(z) = B0 + B' (z - z_grad) + p K I [X / z - 2 z / (z^2 + pitch^2)],   K = mu0 / 2 pi.
struct FieldModel {
  double bias_G = 35.0;
  double bias_gradient_G_per_um = 9e-5;  // 90 G/m
  double current_A = 1.122;
  double wire_pitch_um = 100.0;
  double centre_factor = 1.0;
  double outer_factor = -1.0;
  double z_grad_ref = 89.5;

  /// |B| and its first two z derivatives; polarity 0 means wires off, bias_on false removes the bias.
  void field(double z, int polarity, bool bias_on, double& B, double& dB, double& d2B) const;
  /// Zeeman potential g_F m_F mu_B |B| / hbar (plus gravity) expanded at z.
  QuadraticPotential potential(double z, int spin, int polarity, bool bias_on, bool gravity,
                               double hbar_over_m, bool spin_independent = false) const;
};

struct SequenceConfig {
  double t_rf1 = 1000.0;      // us after release
  double T1 = 3.75;
  double Td1 = 230.0;
  double rf2_delay = 115.0;   // after the end of T1
  double T2 = 400.0;
  double rf3_delay = 10.0;    // after the end of T2
  double Td2 = 410.0;         // T3 start after the start of T2
  double T3 = 30.0;
  double bias_off_delay = 660.0;  // after the end of T3
  double Tf = 14000.0;            // flight after the bias is off
  double hbar_over_m = units::kHbarOverMassRb87;
  double omega_z = units::kTwoPi * 113e-6;  // rad/us, trap frequency (initial state only)
  double z0 = 89.5;
  double sigma0 = 1.23;
  bool gravity = true;
  bool spin_independent = false;  // both spins feel the m_F = 1 potential
  FieldModel field;
  bool calibrate = true;
  double n_periods_target = 5.61;
  std::size_t grid_points = 4096;
  double step_tol = 1e-9;  // um and rad/um, step-doubling error per step
  double max_step = 5.0;   // us

  void validate() const;
};

void to_json(nlohmann::json& j, const SequenceConfig& c);
void from_json(const nlohmann::json& j, SequenceConfig& c);

/// Two-constituent phases: theta = pi/2 - chi/2 from the overlap phase, theta_fringe = pi/2 - f/2 with
/// f = arg(psi_a* psi_b) at the pair midpoint.  They agree when the pair widths are equal.
struct SpinPattern {
  int spin = 0;
  double kappa = 0.0, sigma = 0.0, z = 0.0, theta = 0.0, theta_fringe = 0.0, chi = 0.0;
  double delta_z = 0.0, delta_k = 0.0, n_periods = 0.0, width_mismatch = 0.0;
};

struct SequenceResult {
  SampledSignal spin1, spin2, moire;
  std::vector<GaussianWavepacket> final_packets;
  std::vector<ConservationRecord> records;  // every checkpoint
  std::size_t first_conserved = 0;          // records from here on share Gamma, chi
  SpinPattern pattern1, pattern2;
  ModelParams params;  // two-constituent form: kappa_i, theta_fringe_i, z_i, mean sigma
  double centre_factor = 0.0;
  double weight2_total = 0.0;  // kept + discarded
  double t_observe = 0.0;
  std::vector<std::string> warnings;

  double gamma_drift() const;  // max relative deviation from the first conserved record
  double theta_difference() const { return pattern1.theta - pattern2.theta; }
  nlohmann::json summary() const;
};

/// Centre-wire factor that makes Gamma after the second pulse equal (pi/2) n_periods_target.
double calibrate_field(const SequenceConfig& cfg);

SequenceResult run_sequence(const SequenceConfig& cfg);

void write_csv(std::ostream& os, const std::vector<ConservationRecord>& records);

}  // namespace moire
