#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "moire/errors.hpp"
#include "moire/pattern.hpp"
#include "moire/units.hpp"

using namespace moire;
using moire::units::kPi;

namespace {

// Independent form of the two-constituent pattern: sin^2 x = (1 - cos 2x) / 2.
double oracle_value(const ModelParams& p, double z) {
  auto term = [&](double k, double zc, double th) {
    const double u = z - zc;
    return 0.5 * std::exp(-u * u / (2 * p.sigma * p.sigma)) * (1.0 - std::cos(k * u + 2 * th));
  };
  return term(p.kappa1, p.z1, p.theta1) + term(p.kappa2, p.z2, p.theta2);
}

ModelParams random_params(std::mt19937_64& rng, bool common_kappa = true) {
  std::uniform_real_distribution<double> U(0, 1);
  ModelParams p;
  p.kappa1 = 0.2 + 2.0 * U(rng);
  p.kappa2 = common_kappa ? p.kappa1 : p.kappa1 * (0.95 + 0.1 * U(rng));
  p.sigma = (1.5 + 10 * U(rng)) / p.kappa1;
  p.theta1 = 2 * kPi * U(rng);
  p.theta2 = 2 * kPi * U(rng);
  p.z1 = -20 + 40 * U(rng);
  p.z2 = p.z1 + (U(rng) - 0.5) * 6 * p.sigma;
  return p;
}

}  // namespace

TEST_CASE("identical constituents add") {
  auto p = ModelParams::symmetric(0.7, 9.0, 0.0, 0.3);
  const auto g = default_grid(p, 2048);
  const auto s = generate_pattern(p, g);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = s.z(i);
    const double sn = std::sin(0.7 * (z - p.z1) / 2 + 0.3);
    CHECK(s.values[i] == doctest::Approx(2 * std::exp(-(z - p.z1) * (z - p.z1) / (2 * 81.0)) * sn * sn).epsilon(1e-13));
  }
}

TEST_CASE("first term vanishes at z1 when theta1 = 0") {
  ModelParams p;
  p.kappa1 = p.kappa2 = 1.3;
  p.sigma = 5;
  p.z1 = 1.0;
  p.z2 = 4.0;
  p.theta2 = 0.4;
  const double s2 = std::sin(1.3 * (p.z1 - p.z2) / 2 + 0.4);
  CHECK(pattern_value(p, p.z1) == doctest::Approx(std::exp(-9.0 / 50.0) * s2 * s2).epsilon(1e-14));
}

TEST_CASE("value table against independent evaluation, N_p = 5.6 example") {
  // kappa = 1 rad/um, sigma = 8.81 um, dphi = 2 pi
  auto p = ModelParams::symmetric(1.0, 8.81, 2 * kPi);
  const auto g = default_grid(p, 1024);
  const auto s = generate_pattern(p, g);
  REQUIRE(s.size() == 1024);
  double worst = 0;
  for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(s.values[i] - oracle_value(p, s.z(i))));
  CHECK(worst < 1e-13);
  CHECK(p.n_periods() == doctest::Approx(2 * 8.81 / kPi));
}

TEST_CASE("errors: coarse grid, bad sigma, insufficient coverage") {
  auto p = ModelParams::symmetric(1.0, 8.0, 1.0);
  CHECK_THROWS_AS(generate_pattern(p, Grid::spanning(-60, 60, 100)), SamplingError);
  CHECK_THROWS_AS(generate_pattern(p, Grid::spanning(-10, 10, 4000)), SamplingError);
  p.sigma = 0.0;
  CHECK_THROWS_AS(generate_pattern(p, Grid::spanning(-60, 60, 4000)), ParameterError);
  p.sigma = -1.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("property: translation covariance, swap symmetry, range") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_params(rng, trial % 2 == 0);
    const auto g = default_grid(p, 1500);
    const auto a = generate_pattern(p, g);
    for (double v : a.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
    const double c = 17.25;
    auto q = p;
    q.z1 += c;
    q.z2 += c;
    Grid gs = g;
    gs.z0 += c;
    const auto b = generate_pattern(q, gs);
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    CHECK(worst < 1e-12);

    if (p.equal_kappa()) {
      auto r = p;
      std::swap(r.z1, r.z2);
      std::swap(r.theta1, r.theta2);
      const auto d = generate_pattern(r, g);
      double w2 = 0;
      for (std::size_t i = 0; i < a.size(); ++i) w2 = std::max(w2, std::abs(a.values[i] - d.values[i]));
      CHECK(w2 < 1e-14);
    }
  }
}

TEST_CASE("positive-frequency part reconstructs the pattern") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_params(rng, true);
    const auto g = default_grid(p, 2000);
    const auto s = generate_pattern(p, g);
    const auto vp = positive_frequency_part(p, g);
    double worst = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double z = g.z(i);
      const double G1 = std::exp(-std::pow(z - p.z1, 2) / (2 * p.sigma * p.sigma));
      const double G2 = std::exp(-std::pow(z - p.z2, 2) / (2 * p.sigma * p.sigma));
      worst = std::max(worst, std::abs(0.5 * (G1 + G2) - vp[i].real() - s.values[i]));
    }
    CHECK(worst < 1e-12);
  }
  ModelParams mixed = ModelParams::symmetric(1.0, 8.0, 1.0);
  mixed.kappa2 = 1.03;
  CHECK_THROWS_AS(positive_frequency_part(mixed, default_grid(mixed)), UnsupportedFormError);
  CHECK_THROWS_AS(local_phase(mixed, default_grid(mixed)), UnsupportedFormError);
}

TEST_CASE("dphi = 0: |V+| is the envelope, phase slope kappa") {
  auto p = ModelParams::symmetric(0.9, 7.0, 0.0, 0.2);
  const auto g = default_grid(p, 1024);
  const auto vp = positive_frequency_part(p, g);
  for (std::size_t i = 0; i < vp.size(); ++i) {
    const double z = g.z(i);
    CHECK(std::abs(vp[i]) == doctest::Approx(std::exp(-z * z / 98.0)).epsilon(1e-12));
  }
  const auto ph = local_phase(p, g);
  CHECK_FALSE(ph.singular);
  for (std::size_t i = 1; i < ph.size(); ++i) CHECK(ph.phase[i] - ph.phase[i - 1] == doctest::Approx(0.9 * g.dz).epsilon(1e-9));
}

TEST_CASE("bracket phase at the midpoint is the mean of phi1, phi2") {
  ModelParams p;
  p.kappa1 = p.kappa2 = 1.1;
  p.sigma = 6;
  p.z1 = -1.2;
  p.z2 = 0.8;
  p.theta1 = 0.3;
  p.theta2 = 0.5;
  const auto vp = positive_frequency_part(p, Grid{p.mean_z(), 0.01, 2});
  const double phi1 = 2 * p.theta1 - 1.1 * p.z1, phi2 = 2 * p.theta2 - 1.1 * p.z2;
  const double bracket = std::arg(vp[0] * std::polar(1.0, -1.1 * p.mean_z()));
  const double expect = std::remainder(0.5 * (phi1 + phi2), 2 * kPi);
  CHECK(std::abs(std::remainder(bracket - expect, 2 * kPi)) < 1e-12);
}

TEST_CASE("local phase gradient: sign around odd multiples of pi") {
  for (int n = 1; n <= 4; ++n) {
    auto p = ModelParams::symmetric(1.0, 8.81, 2 * kPi * n);
    const auto g = default_grid(p, 2001);
    const auto ph = local_phase(p, g);
    for (std::size_t i = 0; i < ph.size(); ++i) CHECK(ph.gradient[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (double dphi : {2.2 * kPi, 2.5 * kPi, 2.9 * kPi})
    CHECK(local_phase_gradient(ModelParams::symmetric(1.0, 8.81, dphi), 0.0) < 1.0);
  for (double dphi : {3.1 * kPi, 3.5 * kPi, 3.9 * kPi})
    CHECK(local_phase_gradient(ModelParams::symmetric(1.0, 8.81, dphi), 0.0) > 1.0);
}

TEST_CASE("local phase gradient matches the equal-theta closed form") {
  // kappa (1 - (dphi / 2 (kappa sigma)^2) sin dphi / (cosh((z - zbar) dphi / kappa sigma^2) + cos dphi))
  const double k = 0.8, sg = 9.0, dphi = 2.6 * kPi;
  auto p = ModelParams::symmetric(k, sg, dphi, 0.7, 3.0);
  for (double z = -20; z <= 26; z += 0.5) {
    const double x = (z - 3.0) * dphi / (k * sg * sg);
    const double expect = k * (1 - dphi / (2 * k * k * sg * sg) * std::sin(dphi) / (std::cosh(x) + std::cos(dphi)));
    CHECK(local_phase_gradient(p, z) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("local phase gradient vs centred finite difference, dz = sigma / 200") {
  auto fd_error = [](const ModelParams& p, double dz, double* integral_err) {
    const double lo = std::min(p.z1, p.z2) - 4 * p.sigma, hi = std::max(p.z1, p.z2) + 4 * p.sigma;
    Grid g{lo, dz, static_cast<std::size_t>((hi - lo) / dz) + 1};
    const auto ph = local_phase(p, g);
    REQUIRE_FALSE(ph.singular);
    double worst = 0;
    for (std::size_t i = 1; i + 1 < ph.size(); ++i)
      worst = std::max(worst, std::abs((ph.phase[i + 1] - ph.phase[i - 1]) / (2 * dz) - ph.gradient[i]));
    double integral = 0;
    for (std::size_t i = 1; i < ph.size(); ++i) integral += 0.5 * dz * (ph.gradient[i] + ph.gradient[i - 1]);
    *integral_err = std::abs(integral - (ph.phase.back() - ph.phase.front()));
    return worst;
  };
  // truncation error grows as the midpoint amplitude |cos(dphi/2)| shrinks; these keep it moderate
  for (double dphi : {0.7 * kPi, 2.5 * kPi, 3.4 * kPi, 4.4 * kPi}) {
    auto p = ModelParams::symmetric(1.0, 8.81, dphi, 0.1);
    double ierr = 0;
    CHECK(fd_error(p, p.sigma / 200, &ierr) < 1e-6 * p.kappa());
    CHECK(ierr < 1e-4);
  }
  // near an odd multiple of pi the same check converges at second order
  auto p = ModelParams::symmetric(1.0, 8.81, 5.2 * kPi, 0.1);
  double i1 = 0, i2 = 0;
  const double e1 = fd_error(p, p.sigma / 200, &i1);
  const double e2 = fd_error(p, p.sigma / 400, &i2);
  CHECK(e2 < 0.3 * e1);
  CHECK(i2 < 0.3 * i1 + 1e-10);
}

TEST_CASE("degenerate dphi = pi: singular point masked") {
  auto p = ModelParams::symmetric(1.0, 8.81, kPi);
  Grid g{-40.0, 0.01, 8001};  // contains z = 0 exactly
  const auto ph = local_phase(p, g);
  CHECK(ph.singular);
  CHECK(ph.valid[4000] == 0);
  CHECK(std::isnan(ph.phase[4000]));
  CHECK(ph.valid[3990] == 1);
}

TEST_CASE("dphi = 2 pi n: oscillatory factor has period 2 pi / kappa") {
  const double k = 1.0;
  auto p = ModelParams::symmetric(k, 8.81, 4 * kPi, 0.25);
  const auto g = default_grid(p, 4096);
  const auto s = generate_pattern(p, g);
  std::vector<double> osc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = s.z(i);
    if (std::abs(z - p.mean_z()) > 4 * p.sigma) continue;
    const double env = 0.5 * (std::exp(-std::pow(z - p.z1, 2) / (2 * p.sigma * p.sigma)) +
                              std::exp(-std::pow(z - p.z2, 2) / (2 * p.sigma * p.sigma)));
    osc.push_back(s.values[i] / env - 1.0);
  }
  const auto lag_lo = static_cast<std::size_t>(0.5 * 2 * kPi / k / g.dz);
  const auto lag_hi = static_cast<std::size_t>(1.5 * 2 * kPi / k / g.dz);
  std::size_t best = 0;
  double best_r = -1e300;
  for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
    double r = 0;
    for (std::size_t i = 0; i + lag < osc.size(); ++i) r += osc[i] * osc[i + lag];
    r /= static_cast<double>(osc.size() - lag);
    if (r > best_r) {
      best_r = r;
      best = lag;
    }
  }
  CHECK(std::abs(static_cast<double>(best) * g.dz - 2 * kPi / k) <= g.dz);
}

TEST_CASE("JSON and CSV round trips") {
  ModelParams p;
  p.kappa1 = 0.11;
  p.kappa2 = 0.113;
  p.theta1 = 0.2;
  p.theta2 = -0.1;
  p.z1 = -3;
  p.z2 = 4.5;
  p.sigma = 80;
  nlohmann::json j = p;
  const auto q = j.get<ModelParams>();
  CHECK(q.kappa2 == p.kappa2);
  CHECK(q.sigma == p.sigma);
  CHECK(q.theta2 == p.theta2);

  const auto s = generate_pattern(p, default_grid(p, 300));
  std::stringstream ss;
  write_csv(ss, s);
  CHECK(ss.str().rfind("# units:", 0) == 0);
  const auto r = read_csv(ss);
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(r.values[i] == s.values[i]);
  CHECK(r.dz == doctest::Approx(s.dz).epsilon(1e-12));
}
