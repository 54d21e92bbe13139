#include "moire/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <ostream>
#include <random>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/parallel.hpp"
#include "moire/units.hpp"

namespace moire {

using units::kPi;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SampledSignal constituent(const ModelParams& p, int which, const Grid& g) {
  const double kap = which == 1 ? p.kappa1 : p.kappa2;
  const double zc = which == 1 ? p.z1 : p.z2;
  const double th = which == 1 ? p.theta1 : p.theta2;
  SampledSignal s{g.z0, g.dz, std::vector<double>(g.n)};
  for (std::size_t i = 0; i < g.n; ++i) {
    const double u = g.z(i) - zc;
    const double sn = std::sin(0.5 * kap * u + th);
    s.values[i] = std::exp(-u * u / (2 * p.sigma * p.sigma)) * sn * sn;
  }
  return s;
}

SampledSignal image_profile(const SampledSignal& s, const CcdOptions& o, std::mt19937_64& rng) {
  return column_profile(synthetic_ccd(s, o, rng));
}

// |positive-frequency transform| of the two-constituent pattern, up to a constant
double two_kappa_aft(const ModelParams& p, double K) {
  const double s2 = p.sigma * p.sigma;
  const auto term = [&](double kap, double z, double th) {
    return std::exp(-0.5 * s2 * (K - kap) * (K - kap)) * std::polar(1.0, 2 * th - K * z);
  };
  return std::abs(term(p.kappa1, p.z1, p.theta1) + term(p.kappa2, p.z2, p.theta2));
}

struct SecondaryLobe {
  double rel = 0.0;  // second-highest / highest local maximum (0 if none)
  double dip = 0.0;  // deepest point between the two, relative to the second
};

// local maxima of two_kappa_aft on K in (0, 4 kappa]
SecondaryLobe analytic_secondary(const ModelParams& p) {
  const std::size_t n = 40000;
  const double dk = 4 * p.kappa() / n;
  std::vector<double> a(n + 1);
  for (std::size_t i = 1; i <= n; ++i) a[i] = two_kappa_aft(p, i * dk);
  std::size_t i1 = 0, i2 = 0;
  for (std::size_t i = 2; i < n; ++i) {
    if (!(a[i] > a[i - 1] && a[i] >= a[i + 1])) continue;
    if (!i1 || a[i] > a[i1]) {
      i2 = i1;
      i1 = i;
    } else if (!i2 || a[i] > a[i2]) {
      i2 = i;
    }
  }
  SecondaryLobe r;
  if (!i1 || !i2) return r;
  r.rel = a[i2] / a[i1];
  r.dip = *std::min_element(a.begin() + std::min(i1, i2), a.begin() + std::max(i1, i2)) / a[i2];
  return r;
}

double peak_of(const SampledSignal& s) {
  const auto env = fit_envelope(s);
  return numerical_spectrum(s, env.envelope.sigma).primary.K;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(T2_max > T2_min) || !(T2_min > 0)) throw ParameterError("pipeline: need 0 < T2_min < T2_max");
  if (n_T2 < 8) throw ParameterError("pipeline: at least 8 T2 points");
  if (T2_min + std::min(trajectory.b1, trajectory.b2) <= 0)
    throw DomainError("pipeline: T2 + b_i must stay positive");
  if (grid_points < 64) throw ParameterError("pipeline: grid_points must be >= 64");
  if (!(near_jump_offset > 0)) throw ParameterError("pipeline: near_jump_offset must be > 0");
  if (ccd.rows == 0) throw ParameterError("pipeline: ccd.rows must be > 0");
}

std::vector<double> PipelineConfig::T2_values() const {
  auto t = linspace(T2_min, T2_max, n_T2);
  if (near_jump_points) {
    // dphi(T2) = a / T2^2 + phi0 is decreasing; invert at pi(2n+1) -+ offset
    for (double tj : trajectory.jump_times(T2_min, T2_max)) {
      const double d = trajectory.delta_phi(tj);
      for (double off : {-near_jump_offset, near_jump_offset}) {
        const double x = d + off - trajectory.phi0;
        if (x <= 0) continue;
        const double T = std::sqrt(trajectory.a / x);
        if (T > T2_min && T < T2_max) t.push_back(T);
      }
    }
  }
  std::sort(t.begin(), t.end());
  return t;
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"trajectory", c.trajectory}, {"T2_min", c.T2_min}, {"T2_max", c.T2_max}, {"n_T2", c.n_T2},
       {"near_jump_points", c.near_jump_points}, {"near_jump_offset", c.near_jump_offset}, {"theta", c.theta},
       {"grid_points", c.grid_points},
       {"ccd", {{"rows", c.ccd.rows}, {"blur_sigma", c.ccd.blur_sigma}, {"snr", c.ccd.snr}}},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  const PipelineConfig d;
  c.trajectory = j.contains("trajectory") ? j.at("trajectory").get<TrajectoryParams>() : d.trajectory;
  c.T2_min = j.value("T2_min", d.T2_min);
  c.T2_max = j.value("T2_max", d.T2_max);
  c.n_T2 = j.value("n_T2", d.n_T2);
  c.near_jump_points = j.value("near_jump_points", d.near_jump_points);
  c.near_jump_offset = j.value("near_jump_offset", d.near_jump_offset);
  c.theta = j.value("theta", d.theta);
  c.grid_points = j.value("grid_points", d.grid_points);
  c.seed = j.value("seed", d.seed);
  c.ccd = d.ccd;
  if (j.contains("ccd")) {
    const auto& o = j.at("ccd");
    c.ccd.rows = o.value("rows", d.ccd.rows);
    c.ccd.blur_sigma = o.value("blur_sigma", d.ccd.blur_sigma);
    c.ccd.snr = o.value("snr", d.ccd.snr);
  }
}

PipelineResult run_pipeline(const PipelineConfig& cfg, double secondary_margin) {
  cfg.validate();
  const auto T2 = cfg.T2_values();
  const auto& tp = cfg.trajectory;
  const double ks = units::kappa_sigma_from_periods(tp.n_periods);
  PipelineResult res;
  res.points.resize(T2.size());

  parallel_for(T2.size(), cfg.jobs, [&](std::size_t i) {
    PipelinePoint& pt = res.points[i];
    pt.T2 = T2[i];
    pt.kappa1 = tp.kappa1(T2[i]);
    pt.kappa2 = tp.kappa2(T2[i]);
    pt.dphi = tp.delta_phi(T2[i]);
    const double kap = 0.5 * (pt.kappa1 + pt.kappa2);
    pt.sigma = ks / kap;
    ModelParams p;
    p.kappa1 = pt.kappa1;
    p.kappa2 = pt.kappa2;
    p.theta1 = p.theta2 = cfg.theta;
    p.sigma = pt.sigma;
    p.z1 = -0.5 * pt.dphi / kap;
    p.z2 = 0.5 * pt.dphi / kap;
    const Grid g = default_grid(p, cfg.grid_points);

    const auto lobe = analytic_secondary(p);
    pt.analytic_secondary_rel = lobe.rel;
    pt.analytic_secondary_dip = lobe.dip;
    pt.secondary_expected = pt.analytic_secondary_rel >= 0.2;

    const auto clean = generate_pattern(p, g);
    {
      const auto env = fit_envelope(clean);
      const auto sp = numerical_spectrum(clean, env.envelope.sigma);
      pt.v_true = fit_fringes(clean, sp.primary.K).v;
    }

    std::seed_seq ss{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(ss);
    const auto prof = image_profile(clean, cfg.ccd, rng);
    const auto env = fit_envelope(prof);
    pt.sigma0 = env.envelope.sigma;
    const auto sp = numerical_spectrum(prof, pt.sigma0);
    pt.K_M = sp.primary.K;
    pt.K_secondary = sp.secondary ? sp.secondary->K : kNaN;
    pt.secondary_fired = sp.secondary.has_value();
    pt.secondary_rel = sp.runner_up ? sp.runner_up->relative_intensity : 0.0;
    const auto ff = fit_fringes(prof, pt.K_M);
    pt.v = ff.v;
    pt.phi = ff.phi;
    pt.low_confidence = ff.low_confidence;

    pt.kappa1_meas = peak_of(image_profile(constituent(p, 1, g), cfg.ccd, rng));
    pt.kappa2_meas = peak_of(image_profile(constituent(p, 2, g), cfg.ccd, rng));
  });

  std::vector<double> k1, k2, v;
  for (const auto& pt : res.points) {
    k1.push_back(pt.kappa1_meas);
    k2.push_back(pt.kappa2_meas);
    v.push_back(pt.v);
  }
  res.kappa1_fit = fit_kappa_curve(T2, k1);
  res.kappa2_fit = fit_kappa_curve(T2, k2);
  res.visibility_fit = fit_visibility_curve(T2, v);

  for (const auto& pt : res.points) {
    res.kappa_max_rel_error = std::max({res.kappa_max_rel_error, std::abs(res.kappa1_fit.model(pt.T2) / pt.kappa1 - 1),
                                        std::abs(res.kappa2_fit.model(pt.T2) / pt.kappa2 - 1)});
    res.dphi_max_rel_error =
        std::max(res.dphi_max_rel_error, std::abs(res.visibility_fit.delta_phi(pt.T2) / pt.dphi - 1));
    res.v_max_abs_error = std::max(res.v_max_abs_error, std::abs(pt.v - pt.v_true));
    res.v_max_rel_error = std::max(res.v_max_rel_error, std::abs(pt.v / pt.v_true - 1));
    if (std::abs(pt.analytic_secondary_rel - 0.2) >= secondary_margin &&
        (pt.analytic_secondary_rel < 0.2 || pt.analytic_secondary_dip <= 1 - secondary_margin)) {
      ++res.secondary_checked;
      if (pt.secondary_fired != pt.secondary_expected) ++res.secondary_mismatches;
    }
    if (std::abs(std::cos(0.5 * pt.dphi)) < std::sin(0.5 * (cfg.near_jump_offset + 1e-9))) {
      ++res.near_jump_points;
      if (pt.secondary_fired) ++res.secondary_fired_near_jump;
    }
  }
  res.a_rel_error = std::abs(res.visibility_fit.a / tp.a - 1);
  const double phi0 = std::fmod(std::fmod(tp.phi0, 2 * kPi) + 2 * kPi, 2 * kPi);
  res.phi0_rel_error = std::abs(res.visibility_fit.phi0 / phi0 - 1);
  return res;
}

nlohmann::json PipelineResult::summary() const {
  return {{"kappa1_fit", kappa1_fit}, {"kappa2_fit", kappa2_fit}, {"visibility_fit", visibility_fit},
          {"kappa_max_rel_error", kappa_max_rel_error}, {"dphi_max_rel_error", dphi_max_rel_error},
          {"v_max_abs_error", v_max_abs_error},
          {"v_max_rel_error", v_max_rel_error}, {"a_rel_error", a_rel_error}, {"phi0_rel_error", phi0_rel_error},
          {"secondary_checked", secondary_checked}, {"secondary_mismatches", secondary_mismatches},
          {"near_jump_points", near_jump_points}, {"secondary_fired_near_jump", secondary_fired_near_jump},
          {"n_points", points.size()}};
}

void write_csv(std::ostream& os, const PipelineResult& r) {
  CsvWriter w(os,
              "T2 us, kappa rad/um, dphi rad, sigma um, K rad/um, v 1, phi rad",
              {"T2", "kappa1", "kappa2", "dphi", "sigma", "v_true", "analytic_secondary_rel", "analytic_secondary_dip", "secondary_expected",
               "kappa1_meas", "kappa2_meas", "K_M", "K_secondary", "secondary_rel", "secondary_fired", "v", "phi",
               "sigma0", "low_confidence"});
  for (const auto& p : r.points)
    w.row({p.T2, p.kappa1, p.kappa2, p.dphi, p.sigma, p.v_true, p.analytic_secondary_rel, p.analytic_secondary_dip,
           double(p.secondary_expected), p.kappa1_meas, p.kappa2_meas, p.K_M, p.K_secondary, p.secondary_rel,
           double(p.secondary_fired), p.v, p.phi, p.sigma0, double(p.low_confidence)});
}

}  // namespace moire
