#include "moire/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "moire/errors.hpp"
#include "moire/fft.hpp"
#include "moire/fitting.hpp"
#include "moire/io.hpp"
#include "moire/roots.hpp"
#include "moire/units.hpp"

namespace moire {

using units::kPi;
using units::kTwoPi;

double Envelope::operator()(double z) const {
  const double u = (z - zbar) / sigma;
  return A * std::exp(-0.5 * u * u) + c;
}

void to_json(nlohmann::json& j, const SpectralPeak& p) {
  j = nlohmann::json{{"K", p.K}, {"height", p.height}, {"relative_intensity", p.relative_intensity}};
}

nlohmann::json peak_record(const SpectralResult& r) {
  nlohmann::json j{{"K_M", r.primary.K},
                   {"height", r.primary.height},
                   {"bin_width", r.bin_width},
                   {"cutoff", r.cutoff},
                   {"envelope_sigma", r.envelope_sigma},
                   {"envelope_fitted", r.envelope_fitted}};
  if (r.secondary) {
    j["secondary"] = *r.secondary;
    j["relative_intensity"] = r.secondary->relative_intensity;
  } else {
    j["secondary"] = nullptr;
    j["relative_intensity"] = r.runner_up ? r.runner_up->relative_intensity : 0.0;
  }
  return j;
}

void write_csv(std::ostream& os, const SpectralResult& r) {
  CsvWriter w(os, "K [rad/um], AFT [dimensionless]", {"K", "AFT"});
  for (std::size_t i = 0; i < r.k_grid.size(); ++i) w.row({r.k_grid[i], r.aft[i]});
}

double analytic_aft(const ModelParams& p, double K) {
  if (!p.equal_kappa()) throw UnsupportedFormError("analytic_aft requires kappa1 == kappa2");
  const double d = K - p.kappa();
  return std::exp(-0.5 * p.sigma * p.sigma * d * d) *
         std::abs(std::cos(0.5 * K * p.delta_z() - p.delta_theta()));
}

double aft_fixed_dz(double n_periods, double delta_phi, double delta_theta, double k_dz) {
  if (!(n_periods > 0.0)) throw ParameterError("aft_fixed_dz: N_p must be > 0");
  if (delta_phi == 0.0 || !std::isfinite(delta_phi))
    throw ParameterError("aft_fixed_dz: delta_phi = 0 leaves K dz scaling undefined");
  const double w = 0.5 * kPi * n_periods / delta_phi;
  const double d = k_dz - delta_phi;
  return std::exp(-0.5 * w * w * d * d) * std::abs(std::cos(0.5 * k_dz - delta_theta));
}

namespace detail {

std::vector<LobeMax> lobe_maxima(double c, double s, double beta, double dtheta) {
  if (!(beta > 0.0) || !(s > 0.0)) throw ParameterError("lobe_maxima: beta, s must be > 0");
  const double s2 = s * s;
  const double W = 10.0 / s + kPi / beta;
  const double m_lo = std::floor((beta * (c - W) - dtheta) / kPi - 0.5);
  const double m_hi = std::ceil((beta * (c + W) - dtheta) / kPi + 0.5);
  if (m_hi - m_lo > 20000) throw SolverError("lobe_maxima: too many lobes in the search window");

  std::vector<LobeMax> out;
  const double edge = 0.5 * kPi * (1.0 - 1e-13);
  for (double mf = m_lo; mf <= m_hi; mf += 1.0) {
    const double off = mf * kPi + dtheta;
    // F(u) = dlog/dK in lobe coordinates u = beta K - dtheta - m pi; strictly decreasing
    auto fg = [&](double u) {
      const double K = (u + off) / beta;
      const double t = std::tan(u);
      return std::pair<double, double>{-s2 * (K - c) - beta * t, -s2 / beta - beta * (1.0 + t * t)};
    };
    roots::RootResult rr;
    try {
      rr = roots::newton_bracketed(fg, -edge, edge, 1e-16, 400);
    } catch (const SolverError&) {
      continue;  // maximum pinned at a zero of cos: irrelevant
    }
    const double K = (rr.x + off) / beta;
    const double d = K - c;
    out.push_back({K, -0.5 * s2 * d * d + std::log(std::abs(std::cos(rr.x))), static_cast<int>(mf)});
  }
  if (out.empty()) throw SolverError("lobe_maxima: no bracket found on any branch");
  std::sort(out.begin(), out.end(),
            [](const LobeMax& a, const LobeMax& b) { return a.log_value > b.log_value; });
  return out;
}

}  // namespace detail

namespace {

bool near_odd_pi(double x, double tol) {
  const double n = std::round((x / kPi - 1.0) * 0.5);
  return std::abs(x - kPi * (2.0 * n + 1.0)) < tol;
}

}  // namespace

void to_json(nlohmann::json& j, const PeakSolve& p) {
  j = nlohmann::json{{"K_M", p.K_M},           {"branch_n", p.branch_n}, {"degenerate", p.degenerate},
                     {"residual", p.residual}, {"height", p.height},     {"lobe", p.lobe}};
  j["K_other"] = p.K_other ? nlohmann::json(*p.K_other) : nlohmann::json(nullptr);
}

PeakSolve solve_km(const ModelParams& params) {
  params.validate();
  if (!params.equal_kappa()) throw UnsupportedFormError("solve_km requires kappa1 == kappa2");
  const double kappa = params.kappa();
  const double sigma = params.sigma;
  if (!(kappa * sigma > 1.0)) throw ParameterError("solve_km requires kappa sigma > 1");

  double beta = 0.5 * params.delta_z();
  double dtheta = params.delta_theta();
  PeakSolve out;
  out.branch_n = static_cast<int>(std::lround(params.delta_phi() / kTwoPi));
  if (beta < 0.0) {
    beta = -beta;
    dtheta = -dtheta;
  }
  if (beta == 0.0) {
    out.K_M = kappa;
    out.height = std::abs(std::cos(dtheta));
    if (out.height == 0.0) throw SolverError("solve_km: spectrum vanishes identically");
    return out;
  }

  const auto maxima = detail::lobe_maxima(kappa, sigma, beta, dtheta);
  const double eff = 2.0 * (beta * kappa - dtheta);  // dphi - 2 dtheta
  out.degenerate = near_odd_pi(eff, 1e-6) && maxima.size() >= 2;
  const detail::LobeMax* best = &maxima[0];
  if (out.degenerate) {
    const auto& a = maxima[0];
    const auto& b = maxima[1];
    best = a.K <= b.K ? &a : &b;
    out.K_other = a.K <= b.K ? b.K : a.K;
  }
  out.K_M = best->K;
  out.lobe = best->lobe;
  out.height = std::exp(best->log_value);
  const double t = std::tan(beta * out.K_M - dtheta);
  out.residual = std::abs(out.K_M - kappa + beta / (sigma * sigma) * t) / kappa;
  return out;
}

double jump_height(int n, double kappa, double sigma) {
  if (n < 0) throw ParameterError("jump_height: n must be >= 0");
  if (!(kappa > 0.0) || !(sigma > 0.0) || !(kappa * sigma > 1.0))
    throw ParameterError("jump_height requires kappa sigma > 1");
  const double q = kPi * (2.0 * n + 1.0);
  const double lin = 4.0 * kappa / q;
  const double c = q / (sigma * sigma * kappa);
  // w = dK q / 4 kappa in (0, pi/2]; G(w) = lin w - c cot w is increasing
  auto fg = [&](double w) {
    const double sn = std::sin(w);
    return std::pair<double, double>{lin * w - c * std::cos(w) / sn, lin + c / (sn * sn)};
  };
  const auto rr = roots::newton_bracketed(fg, 1e-300, 0.5 * kPi, 1e-16, 400);
  return lin * rr.x;
}

FixedDzSolve solve_km_fixed_dz_full(double n_periods, double delta_phi, double delta_theta) {
  if (!(n_periods > 0.0)) throw ParameterError("solve_km_fixed_dz: N_p must be > 0");
  if (!(delta_phi > 0.0) || !std::isfinite(delta_phi))
    throw ParameterError("solve_km_fixed_dz: delta_phi must be > 0");
  const double s = 0.5 * kPi * n_periods / delta_phi;
  const auto maxima = detail::lobe_maxima(delta_phi, s, 0.5, delta_theta);
  FixedDzSolve out;
  out.degenerate = near_odd_pi(delta_phi - 2.0 * delta_theta, 1e-6) && maxima.size() >= 2;
  const detail::LobeMax* best = &maxima[0];
  if (out.degenerate) {
    const auto& a = maxima[0];
    const auto& b = maxima[1];
    best = a.K <= b.K ? &a : &b;
    out.k_dz_other = a.K <= b.K ? b.K : a.K;
  }
  out.k_dz = best->K;
  out.height = std::exp(best->log_value);
  return out;
}

double solve_km_fixed_dz(double n_periods, double delta_phi, double delta_theta) {
  return solve_km_fixed_dz_full(n_periods, delta_phi, delta_theta).k_dz;
}

namespace {

SpectralResult spectrum_of(const std::vector<double>& detrended, double dz, double sigma0,
                           const SpectrumOptions& opts) {
  const std::size_t n = detrended.size();
  bool any = false;
  for (double v : detrended)
    if (v != 0.0) {
      any = true;
      break;
    }
  if (!any) throw NoPeakError("numerical_spectrum: signal is identically zero after detrending");

  const double nyquist = kPi / dz;
  const double cutoff =
      (opts.cutoff_cycles ? kTwoPi : 1.0) / (opts.cutoff_factor * sigma0);
  if (!(cutoff < nyquist))
    throw ConfigError("numerical_spectrum: cutoff " + fmt_double(cutoff) + " rad/um is above Nyquist " +
                      fmt_double(nyquist));

  const std::size_t nfft = fft::next_pow2(std::max<std::size_t>(opts.padding, 1) * n);
  const auto F = fft::real_forward(detrended, nfft);
  const double dk = kTwoPi / (static_cast<double>(nfft) * dz);
  const double norm = dz / (0.5 * sigma0 * std::sqrt(kTwoPi));

  SpectralResult r;
  r.bin_width = dk;
  r.cutoff = cutoff;
  r.envelope_sigma = sigma0;
  r.k_grid.resize(F.size());
  r.aft.resize(F.size());
  std::size_t first = F.size();
  for (std::size_t j = 0; j < F.size(); ++j) {
    r.k_grid[j] = dk * static_cast<double>(j);
    if (r.k_grid[j] < cutoff) {
      r.aft[j] = 0.0;
    } else {
      r.aft[j] = std::abs(F[j]) * norm;
      first = std::min(first, j);
    }
  }

  struct Cand {
    double K, h;
  };
  std::vector<Cand> cands;
  // a maximum must have a non-cut neighbour on both sides
  for (std::size_t j = first + 1; j + 1 < F.size(); ++j) {
    const double a = r.aft[j - 1], b = r.aft[j], c = r.aft[j + 1];
    if (!(b > a && b >= c) || b <= 0.0) continue;
    double K = r.k_grid[j], h = b;
    if (a > 0.0 && c > 0.0) {
      const double la = std::log(a), lb = std::log(b), lc = std::log(c);
      const double den = la - 2.0 * lb + lc;
      if (den < 0.0) {
        const double delta = 0.5 * (la - lc) / den;
        K += delta * dk;
        h = std::exp(lb - 0.25 * (la - lc) * delta);
      }
    }
    cands.push_back({K, h});
  }
  if (cands.empty()) throw NoPeakError("numerical_spectrum: no local maximum above the cutoff");
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.h > y.h; });
  r.primary = {cands[0].K, cands[0].h, 1.0};
  if (cands.size() > 1) {
    SpectralPeak s{cands[1].K, cands[1].h, cands[1].h / cands[0].h};
    r.runner_up = s;
    if (s.relative_intensity >= opts.secondary_threshold) r.secondary = s;
  }
  return r;
}

void check_signal(const SampledSignal& s, double sigma0) {
  s.validate();
  if (s.size() < 64) throw SamplingError("numerical_spectrum needs at least 64 samples");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
    throw ParameterError("numerical_spectrum: envelope sigma must be > 0");
}

}  // namespace

SpectralResult numerical_spectrum(const SampledSignal& signal, const Envelope& env,
                                  const SpectrumOptions& opts) {
  check_signal(signal, env.sigma);
  std::vector<double> d(signal.values);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= env(signal.z(i));
  auto r = spectrum_of(d, signal.dz, env.sigma, opts);
  r.envelope_fitted = true;
  return r;
}

SpectralResult numerical_spectrum(const SampledSignal& signal, double envelope_sigma,
                                  const SpectrumOptions& opts) {
  check_signal(signal, envelope_sigma);
  std::vector<double> d(signal.values);
  bool fitted = false;
  if (opts.detrend == SpectrumOptions::Detrend::FittedGaussian) {
    try {
      const auto ef = fit_envelope(signal);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= ef.envelope(signal.z(i));
      fitted = true;
    } catch (const FitError&) {
      fitted = false;
    }
  }
  if (!fitted && opts.detrend != SpectrumOptions::Detrend::None) {
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    for (double& v : d) v -= mean;
  }
  auto r = spectrum_of(d, signal.dz, envelope_sigma, opts);
  r.envelope_fitted = fitted;
  return r;
}

}  // namespace moire
