#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>

#include "moire/errors.hpp"
#include "moire/fft.hpp"
#include "moire/wavepacket.hpp"

using namespace moire;
using moire::units::kPi;
using cd = std::complex<double>;

namespace {

GaussianWavepacket packet(double q, double k, double s, double alpha = 0.0) {
  GaussianWavepacket w;
  w.center = q;
  w.momentum = k;
  w.width = s;
  w.quad_phase = alpha;
  return w;
}

// Strang split-step solution of i psi_t = -(h/2) psi_zz + V psi
std::vector<cd> split_step(std::vector<cd> psi, double z0, double dz, double T, int steps, double h,
                           const QuadraticPotential& v) {
  const std::size_t n = psi.size();
  const double dt = T / steps;
  std::vector<cd> half(n), kin(n);
  for (std::size_t i = 0; i < n; ++i) {
    half[i] = std::exp(cd(0, -0.5 * dt * v(z0 + i * dz)));
    const double k = 2 * kPi / (n * dz) * (i < n / 2 ? double(i) : double(i) - double(n));
    kin[i] = std::exp(cd(0, -0.5 * h * k * k * dt));
  }
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) psi[i] *= half[i];
    auto f = fft::transform(psi);
    for (std::size_t i = 0; i < n; ++i) f[i] *= kin[i] / double(n);
    psi = fft::transform(f, true);
    for (std::size_t i = 0; i < n; ++i) psi[i] *= half[i];
  }
  return psi;
}

double max_diff(const GaussianWavepacket& a, const GaussianWavepacket& b) {
  double m = 0;
  for (double z = a.center - 6 * a.width; z <= a.center + 6 * a.width; z += a.width / 20)
    m = std::max(m, std::abs(a(z) - b(z)));
  return m;
}

}  // namespace

TEST_CASE("dt = 0 is the identity") {
  const auto w = packet(3.0, 0.4, 1.2, 0.1);
  const auto v = QuadraticPotential{1.0, 0.3, -0.2, 0.05};
  const auto e = evolve_quadratic(w, 0.0, v, 1.0);
  CHECK(e.center == w.center);
  CHECK(e.momentum == w.momentum);
  CHECK(e.width == w.width);
  CHECK(e.quad_phase == w.quad_phase);
  CHECK(e.global_phase == w.global_phase);
  CHECK_THROWS_AS(evolve_free(w, -1.0), ParameterError);
}

TEST_CASE("free spreading law and chirp") {
  const double h = units::kHbarOverMassRb87, s0 = 1.23;
  const auto w = packet(10.0, 0.0, s0);
  for (double t : {10.0, 1000.0, 14000.0}) {
    const auto e = evolve_free(w, t, false, h);
    const double tau = h * t / (2 * s0 * s0);
    const double s = s0 * std::sqrt(1 + tau * tau);
    CHECK(e.width == doctest::Approx(s).epsilon(1e-12));
    // alpha = (m / hbar) sigma' / sigma
    const double sdot = s0 * tau * (h / (2 * s0 * s0)) / std::sqrt(1 + tau * tau);
    CHECK(e.quad_phase == doctest::Approx(sdot / (h * s)).epsilon(1e-10));
    CHECK(e.center == doctest::Approx(10.0).epsilon(1e-14));
  }
}

TEST_CASE("uniform force and gravity") {
  const double h = units::kHbarOverMassRb87;
  const auto w = packet(5.0, 0.7, 2.0);
  const double t = 300.0;
  const auto g = evolve_free(w, t, true, h);
  CHECK(g.center == doctest::Approx(5.0 + h * 0.7 * t + 0.5 * units::kGravity * t * t).epsilon(1e-12));
  CHECK(g.momentum == doctest::Approx(0.7 + units::kGravity / h * t).epsilon(1e-12));
  // width does not feel a linear potential
  CHECK(g.width == doctest::Approx(evolve_free(w, t, false, h).width).epsilon(1e-12));
  const QuadraticPotential lin{0.0, 0.0, 0.02, 0.0};
  const auto f = evolve_quadratic(w, 10.0, lin, 1.0);
  CHECK(f.momentum == doctest::Approx(0.7 - 0.2).epsilon(1e-12));
  CHECK(f.center == doctest::Approx(5.0 + 7.0 - 0.5 * 0.02 * 100).epsilon(1e-12));
}

TEST_CASE("harmonic half period reflects the packet") {
  const double h = 1.0, w2 = 0.04;  // omega = 0.2
  const QuadraticPotential v{0.0, 0.0, 0.0, w2 / h};
  const auto w = packet(3.0, 0.5, 1.7, 0.02);
  const auto e = evolve_quadratic(w, kPi / 0.2, v, h);
  CHECK(e.center == doctest::Approx(-3.0).epsilon(1e-10));
  CHECK(e.momentum == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(e.width == doctest::Approx(1.7).epsilon(1e-10));
  CHECK(e.quad_phase == doctest::Approx(0.02).epsilon(1e-9));
  // a full period returns to the start up to the Gouy phase pi
  const auto f = evolve_quadratic(w, 2 * kPi / 0.2, v, h);
  CHECK(std::abs(f(3.3) / w(3.3) + 1.0) < 1e-9);
}

TEST_CASE("propagator agrees with a split-step Schroedinger solution") {
  const double h = 1.0;
  const std::size_t n = 2048;
  const double z0 = -40, dz = 80.0 / n;
  const std::vector<QuadraticPotential> pots{
      {0.0, 0.1, 0.05, 0.0}, {1.0, 0.2, 0.03, 0.02}, {-1.0, 0.0, -0.01, -0.004}};
  for (const auto& v : pots) {
    const auto w = packet(-2.0, 0.6, 1.5, 0.05);
    std::vector<cd> psi(n);
    for (std::size_t i = 0; i < n; ++i) psi[i] = w(z0 + i * dz);
    const double T = 6.0;
    const auto num = split_step(psi, z0, dz, T, 6000, h, v);
    const auto e = evolve_quadratic(w, T, v, h);
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(num[i] - e(z0 + i * dz)));
    CHECK(m < 1e-5);
  }
}

TEST_CASE("substeps leave the result unchanged") {
  const QuadraticPotential v{0.5, 0.1, 0.02, 0.03};
  const auto w = packet(0.0, 0.4, 1.1);
  auto a = evolve_quadratic(w, 20.0, v, 1.0);
  auto b = w;
  for (int i = 0; i < 8; ++i) b = evolve_quadratic(b, 2.5, v, 1.0);
  CHECK(max_diff(a, b) < 1e-10);
}

TEST_CASE("rf pulse rotations") {
  GaussianWavepacket w = packet(0, 0, 1);
  w.spin = 2;
  const auto id = apply_rf_pulse({w}, 0.0);
  REQUIRE(id.size() == 1);
  CHECK(id[0].spin == 2);
  CHECK(id[0].weight == 1.0);

  const auto swap = apply_rf_pulse({w}, kPi);
  REQUIRE(swap.size() == 1);
  CHECK(swap[0].spin == 1);
  CHECK(swap[0].weight == doctest::Approx(1.0).epsilon(1e-15));

  const auto half = apply_rf_pulse({w}, 0.5 * kPi);
  REQUIRE(half.size() == 2);
  double w2 = 0;
  for (const auto& b : half) w2 += b.weight * b.weight;
  CHECK(std::abs(w2 - 1) < 1e-12);
  // two pi/2 pulses recombine coherently into spin 1
  const auto two = apply_rf_pulse(half, 0.5 * kPi);
  REQUIRE(two.size() == 1);
  CHECK(two[0].spin == 1);
  CHECK(two[0].weight == doctest::Approx(1.0).epsilon(1e-12));

  // separated packets do not merge; weight^2 is kept
  auto sep = half;
  sep[0].center = 5.0;
  const auto four = apply_rf_pulse(sep, 0.9);
  CHECK(four.size() == 4);
  w2 = 0;
  for (const auto& b : four) w2 += b.weight * b.weight;
  CHECK(std::abs(w2 - 1) < 1e-12);

  CHECK_THROWS_AS(apply_rf_pulse({w}, -0.1), ParameterError);
  CHECK_THROWS_AS(apply_rf_pulse({w}, 3.2), ParameterError);
}

TEST_CASE("overlap: normalisation and the Gamma formula") {
  const auto a = packet(1.0, 0.3, 1.4, 0.05);
  CHECK(std::abs(overlap(a, a) - 1.0) < 1e-13);
  // numerical integral
  const auto b = packet(2.1, -0.4, 1.4, 0.05);
  cd num = 0;
  const double dz = 0.002;
  for (double z = -20; z < 25; z += dz) num += std::conj(a(z)) * b(z) * dz;
  CHECK(std::abs(num - overlap(a, b)) < 1e-10);

  const auto r = conservation_check(a, b, 1.0);
  CHECK(r.Gamma == doctest::Approx(r.Gamma_formula).epsilon(1e-12));
  CHECK(r.kappa == doctest::Approx(0.05 * 1.1 + 0.7).epsilon(1e-12));

  auto c = b;
  c.width *= 1.01;
  CHECK_THROWS_AS(conservation_check(a, c, 1.0), ModelAssumptionError);
  c = b;
  c.spin = 2;
  CHECK_THROWS_AS(conservation_check(a, c, 1.0), ModelAssumptionError);
  CHECK_NOTHROW(conservation_check(a, c, 1.0, 1e-6, false));
}

TEST_CASE("Gamma and chi are invariant under free flight") {
  const double h = units::kHbarOverMassRb87;
  auto a = packet(0.0, 0.0, 0.8, 0.1);
  auto b = packet(0.3, 3.0, 0.8, 0.1);
  const auto r0 = conservation_check(a, b, h);
  for (double t : {50.0, 500.0, 5000.0}) {
    const auto r = conservation_check(evolve_free(a, t, true, h), evolve_free(b, t, true, h), h);
    CHECK(r.Gamma == doctest::Approx(r0.Gamma).epsilon(1e-10));
    CHECK(std::abs(std::remainder(r.chi - r0.chi, 2 * kPi)) < 1e-8);
  }
}

TEST_CASE("focus quantities: kappa follows the xi relation") {
  const double h = units::kHbarOverMassRb87;
  const auto a = packet(0.0, 0.0, 0.1, -30.0);
  const auto b = packet(1.0, 2.0, 0.1, -30.0);
  const auto r0 = pair_record(a, b, 0.0, h);
  CHECK(r0.t_focus > 0);
  for (double t : {r0.t_focus + 2000.0, r0.t_focus + 20000.0}) {
    const auto r = pair_record(evolve_free(a, t, false, h), evolve_free(b, t, false, h), t, h);
    const double x = r.xi;
    CHECK(r.t_focus == doctest::Approx(r0.t_focus).epsilon(1e-9));
    CHECK(r.sigma_m == doctest::Approx(r0.sigma_m).epsilon(1e-9));
    const double dk = b.momentum - a.momentum;
    CHECK(r.kappa == doctest::Approx(r.kappa_xi0 / (1 + x * x) - dk * x * x / (1 + x * x)).epsilon(1e-9));
  }
}

TEST_CASE("field derivatives match finite differences") {
  FieldModel f;
  f.centre_factor = 1.4;
  for (int pol : {-1, 0, 1})
    for (double z : {40.0, 89.5, 150.0}) {
      double B, dB, d2B, Bp, dBp, d2Bp, Bm, dBm, d2Bm;
      const double e = 1e-3;
      f.field(z, pol, true, B, dB, d2B);
      f.field(z + e, pol, true, Bp, dBp, d2Bp);
      f.field(z - e, pol, true, Bm, dBm, d2Bm);
      CHECK(B >= 0);
      CHECK(dB == doctest::Approx((Bp - Bm) / (2 * e)).epsilon(1e-7));
      CHECK(d2B == doctest::Approx((dBp - dBm) / (2 * e)).epsilon(1e-6));
    }
  double B, dB, d2B;
  CHECK_THROWS_AS(f.field(-1.0, 1, true, B, dB, d2B), DomainError);
  const auto v1 = f.potential(89.5, 1, 1, true, false, units::kHbarOverMassRb87);
  const auto v2 = f.potential(89.5, 2, 1, true, false, units::kHbarOverMassRb87);
  CHECK(v2.v1 == doctest::Approx(2 * v1.v1));
}

TEST_CASE("sequence: conservation, phases and final packets") {
  SequenceConfig c;
  for (double T2 : {200.0, 400.0, 600.0}) {
    c.T2 = T2;
    const auto r = run_sequence(c);
    CHECK(r.final_packets.size() == 4);
    CHECK(r.gamma_drift() < 1e-6);
    CHECK(std::abs(r.theta_difference()) < 1e-6);
    CHECK(std::abs(r.weight2_total - 1) < 1e-12);
    CHECK(r.records[r.first_conserved].Gamma == doctest::Approx(kPi / 2 * 5.61).epsilon(1e-9));
    CHECK(r.pattern1.kappa > 0);
    CHECK(r.pattern2.kappa > 0);
    CHECK(std::abs(r.pattern1.kappa / r.pattern2.kappa - 1) < 0.05);
    const auto& last = r.records.back();
    CHECK(last.sigma_m > 0.06);
    CHECK(last.sigma_m < 0.17);
    CHECK(last.xi < 0.01);
    CHECK(std::abs(last.kappa / last.kappa_xi0 - 1) < 0.01);
    CHECK(std::pow(last.delta_z / (2 * last.sigma), 2) / std::pow(last.kappa_sigma, 2) < 0.02);
  }
}

TEST_CASE("sequence: spin pattern matches the two-constituent form") {
  SequenceConfig c;
  c.T2 = 500.0;
  const auto r = run_sequence(c);
  for (int spin : {1, 2}) {
    const auto& s = spin == 1 ? r.spin1 : r.spin2;
    const auto& sp = spin == 1 ? r.pattern1 : r.pattern2;
    ModelParams m;
    m.kappa1 = m.kappa2 = sp.kappa;
    m.sigma = sp.sigma;
    m.z1 = m.z2 = sp.z;
    m.theta1 = m.theta2 = sp.theta_fringe;
    const auto ref = generate_pattern(m, s.grid());
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      num += s.values[i] * ref.values[i];
      da += s.values[i] * s.values[i];
      db += ref.values[i] * ref.values[i];
    }
    CHECK(num / std::sqrt(da * db) > 0.99);
  }
}

TEST_CASE("sequence: spin-independent potential without T3 gives equal patterns") {
  SequenceConfig c;
  c.spin_independent = true;
  c.T3 = 0.0;
  c.calibrate = false;
  c.field.centre_factor = 1.4;
  const auto r = run_sequence(c);
  double m = 0, s = 0;
  for (std::size_t i = 0; i < r.spin1.size(); ++i) {
    m = std::max(m, std::abs(r.spin1.values[i] - r.spin2.values[i]));
    s = std::max(s, r.spin1.values[i]);
  }
  CHECK(m < 1e-9 * s);
}

TEST_CASE("sequence: config validation and csv") {
  SequenceConfig c;
  c.T2 = -1;
  CHECK_THROWS_AS(run_sequence(c), ParameterError);
  c = SequenceConfig{};
  c.rf2_delay = 300;
  CHECK_THROWS_AS(run_sequence(c), ParameterError);
  nlohmann::json j = SequenceConfig{};
  j["T2"] = 321.0;
  j["field"]["current_A"] = 2.0;
  const auto d = j.get<SequenceConfig>();
  CHECK(d.T2 == 321.0);
  CHECK(d.field.current_A == 2.0);
  const auto r = run_sequence(SequenceConfig{});
  std::ostringstream os;
  write_csv(os, r.records);
  CHECK(os.str().rfind("# units:", 0) == 0);
}
