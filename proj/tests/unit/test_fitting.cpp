#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "moire/errors.hpp"
#include "moire/fitting.hpp"
#include "moire/units.hpp"

using namespace moire;
using moire::units::kPi;

namespace {

SampledSignal sampled(double z0, double dz, std::size_t n, auto f) {
  SampledSignal s{z0, dz, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) s.values[i] = f(s.z(i));
  return s;
}

}  // namespace

TEST_CASE("envelope: exact recovery of a noiseless Gaussian") {
  auto s = sampled(-100, 0.1, 2001, [](double z) { return 2.5 * std::exp(-0.5 * std::pow((z - 3.2) / 17.0, 2)) + 0.3; });
  const auto f = fit_envelope(s);
  CHECK(std::abs(f.envelope.A - 2.5) < 1e-9);
  CHECK(std::abs(f.envelope.zbar - 3.2) < 1e-9);
  CHECK(std::abs(f.envelope.sigma - 17.0) < 1e-9);
  CHECK(std::abs(f.envelope.c - 0.3) < 1e-9);
}

TEST_CASE("envelope: pattern input gives sigma0 within 15%") {
  // reference width is the rms width of (G1 + G2) / 2, which is sigma when dz = 0
  for (double np : {3.0, 5.61, 10.0})
    for (double dphi : {0.0, 1.0, 2 * kPi, 3.3 * kPi}) {
      auto p = ModelParams::from_periods(0.2, np, dphi);
      if (std::abs(p.delta_z()) > 2 * p.sigma) continue;  // (G1 + G2) is two-lobed: outside the fit's domain
      const double ref = std::sqrt(p.sigma * p.sigma + 0.25 * p.delta_z() * p.delta_z());
      const auto f = fit_envelope(generate_pattern(p, default_grid(p)));
      CHECK(std::abs(f.envelope.sigma - ref) < 0.15 * ref);
    }
}

TEST_CASE("envelope: centre within sigma/20 in 95% of 100 noisy trials at SNR 20") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0, 1);
  const double sigma = 30;
  int good = 0;
  for (int t = 0; t < 100; ++t) {
    auto s = sampled(-150, 0.5, 601, [&](double z) { return std::exp(-0.5 * z * z / (sigma * sigma)) + nd(rng) / 20.0; });
    const auto f = fit_envelope(s);
    if (std::abs(f.envelope.zbar) < sigma / 20) ++good;
  }
  CHECK(good >= 95);
}

TEST_CASE("fringes: noiseless dphi = 2 pi n pattern has full contrast") {
  const double kappa = 0.2;
  for (int n = 1; n <= 2; ++n) {
    // envelopes separate as n grows, so the single-Gaussian model is only approximate
    auto p = ModelParams::from_periods(kappa, 10, 2 * kPi * n, 0.4);
    const auto s = generate_pattern(p, default_grid(p));
    CHECK(fit_fringes(s, kappa).v > 0.95);
  }
  auto p = ModelParams::from_periods(kappa, 5.61, 0.0, 0.4);
  const auto s = generate_pattern(p, default_grid(p));
  const auto f = fit_fringes(s, kappa);
  CHECK(f.v == doctest::Approx(1.0).epsilon(1e-6));
  // 2 G sin^2(kappa (z - z1)/2 + theta) = G [1 + sin(kappa z - kappa z1 + 2 theta - pi/2)]
  const double phi_expect = std::fmod(-kappa * p.z1 + 0.8 - kPi / 2 + 8 * kPi, 2 * kPi);
  CHECK(std::abs(std::remainder(f.phi - phi_expect, 2 * kPi)) < 1e-6);
  CHECK(f.sigma == doctest::Approx(p.sigma).epsilon(1e-6));
  CHECK_FALSE(f.low_confidence);
}

TEST_CASE("fringes: visibility minimum at odd multiples of pi") {
  const double kappa = 0.2;
  std::vector<double> vs;
  for (double dphi : {2.6 * kPi, 2.8 * kPi, 3.0 * kPi, 3.2 * kPi, 3.4 * kPi}) {
    auto p = ModelParams::from_periods(kappa, 5.61, dphi);
    const auto s = generate_pattern(p, default_grid(p));
    const auto r = numerical_spectrum(s, p.sigma);
    vs.push_back(fit_fringes(s, r.primary.K).v);
  }
  CHECK(vs[2] < vs[1]);
  CHECK(vs[2] < vs[3]);
  CHECK(vs[1] < vs[0]);
  CHECK(vs[3] < vs[4]);
}

TEST_CASE("fringes: pure Gaussian gives v < 0.02 at SNR 50") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 1);
  auto s = sampled(-200, 0.5, 801, [&](double z) { return std::exp(-0.5 * z * z / 1600.0) + nd(rng) / 50.0; });
  const auto f = fit_fringes(s, 0.2);
  CHECK(f.v < 0.02);
  CHECK(f.v >= 0.0);
}

TEST_CASE("fringes: negative contrast is canonicalised") {
  auto s = sampled(-100, 0.25, 801, [](double z) { return std::exp(-0.5 * z * z / 900) * (1 - 0.6 * std::sin(0.3 * z + 0.2)); });
  const auto f = fit_fringes(s, 0.3);
  CHECK(f.v == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(std::abs(std::remainder(f.phi - (0.2 + kPi), 2 * kPi)) < 1e-6);
}

TEST_CASE("fringes: fewer than two fringes flagged") {
  auto s = sampled(-100, 0.5, 401, [](double z) { return std::exp(-0.5 * z * z / 100) * (1 + 0.5 * std::sin(0.1 * z)); });
  CHECK(fit_fringes(s, 0.1).low_confidence);
}

TEST_CASE("fringes: fixed K_M residual close to K_M free") {
  // scan K around the spectral peak for the free-K optimum
  auto check = [](double np, double dphi) {
    auto p = ModelParams::from_periods(0.2, np, dphi);
    const auto s = generate_pattern(p, default_grid(p, 1024));
    const auto r = numerical_spectrum(s, p.sigma);
    const double fixed = fit_fringes(s, r.primary.K).residual_norm;
    double best = fixed;
    for (double dk = -0.004; dk <= 0.004; dk += 0.00025) best = std::min(best, fit_fringes(s, r.primary.K + dk).residual_norm);
    return fixed / std::max(best, 1e-300);
  };
  for (double np : {5.61, 10.0})
    for (int n = 1; n <= 2; ++n) CHECK(check(np, 2 * kPi * n) <= 1.05);
}

TEST_CASE("visibility curve: noiseless recovery") {
  std::vector<double> T, v;
  for (double t = 150; t <= 800; t += 10) {
    T.push_back(t);
    v.push_back(0.4 * std::cos(163e3 / (t * t) + 1.3) + 0.45);
  }
  const auto f = fit_visibility_curve(T, v);
  CHECK(f.a == doctest::Approx(163e3).epsilon(0.02));
  CHECK(f.phi0 == doctest::Approx(1.3).epsilon(0.02));
  CHECK(f.v0 == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(f.phi0 >= 0.0);
  CHECK(f.phi0 < 2 * kPi);
  CHECK_FALSE(f.basins.empty());
}

TEST_CASE("visibility curve: phi0 canonicalised into [0, 2 pi)") {
  std::vector<double> T, v;
  for (double t = 150; t <= 800; t += 10) {
    T.push_back(t);
    v.push_back(0.4 * std::cos(163e3 / (t * t) + 1.3 - 4 * kPi) + 0.45);
  }
  const auto f = fit_visibility_curve(T, v);
  CHECK(f.phi0 == doctest::Approx(1.3).epsilon(1e-4));
}

TEST_CASE("visibility curve: 5% multiplicative noise, median a error within 5%") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0, 1);
  std::vector<double> errs;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> T, v;
    for (double t = 150; t <= 800; t += 10) {
      T.push_back(t);
      v.push_back((0.4 * std::cos(163e3 / (t * t) + 1.3) + 0.45) * (1 + 0.05 * nd(rng)));
    }
    errs.push_back(std::abs(fit_visibility_curve(T, v).a / 163e3 - 1));
  }
  std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
  CHECK(errs[50] < 0.05);
}

TEST_CASE("kappa curve recovery") {
  for (auto [a, b] : {std::pair{0.175, -56.0}, std::pair{0.183, -56.0}}) {
    std::vector<double> T, k;
    for (double t = 150; t <= 800; t += 25) {
      T.push_back(t);
      k.push_back(2 * kPi * a / std::sqrt(t + b));
    }
    const auto f = fit_kappa_curve(T, k);
    CHECK(f.a == doctest::Approx(a).epsilon(0.02));
    CHECK(f.b == doctest::Approx(b).epsilon(0.02));
    for (double t = 150; t < 800; t += 5) CHECK(f.model(t + 5) < f.model(t));
  }
}

TEST_CASE("estimator consistency: errors shrink with SNR") {
  auto p = ModelParams::from_periods(0.2, 5.61, 2 * kPi);
  const auto clean = generate_pattern(p, default_grid(p, 1024));
  std::vector<double> err;
  for (double snr : {10.0, 30.0, 100.0}) {
    double acc = 0;
    for (int t = 0; t < 20; ++t) {
      std::mt19937_64 rng(1000 + t);
      CcdOptions o;
      o.snr = snr;
      const auto prof = column_profile(synthetic_ccd(clean, o, rng));
      acc += std::abs(fit_fringes(prof, 0.2).v - 1.0);
    }
    err.push_back(acc / 20);
  }
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}

TEST_CASE("synthetic CCD: noiseless column profile equals the input; SNR definition") {
  auto p = ModelParams::from_periods(0.2, 5.61, 2 * kPi);
  const auto s = generate_pattern(p, default_grid(p, 512));
  std::mt19937_64 rng(1);
  CcdOptions o;
  o.rows = 8;
  const auto prof = column_profile(synthetic_ccd(s, o, rng));
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(prof.values[i] == doctest::Approx(s.values[i]).epsilon(1e-14));

  o.snr = 20;
  o.rows = 64;
  const auto noisy = column_profile(synthetic_ccd(s, o, rng));
  double peak = 0, var = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    peak = std::max(peak, s.values[i]);
    var += std::pow(noisy.values[i] - s.values[i], 2);
  }
  const double sd = std::sqrt(var / static_cast<double>(s.size()));
  CHECK(peak / sd == doctest::Approx(20).epsilon(0.15));
}
