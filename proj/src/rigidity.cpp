#include "moire/rigidity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/parallel.hpp"
#include "moire/units.hpp"

namespace moire {

using units::kPi;
using units::kTwoPi;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double kappa_i(double a, double b, double T2) {
  if (!(T2 + b > 0.0)) throw DomainError("kappa(T2): T2 + b must be > 0 (T2 = " + fmt_double(T2) + ")");
  return kTwoPi * a / std::sqrt(T2 + b);
}

}  // namespace

double TrajectoryParams::delta_phi(double T2) const {
  if (!(T2 > 0.0)) throw DomainError("dphi(T2): T2 must be > 0");
  return a / (T2 * T2) + phi0;
}
double TrajectoryParams::kappa1(double T2) const { return kappa_i(a1, b1, T2); }
double TrajectoryParams::kappa2(double T2) const { return kappa_i(a2, b2, T2); }
double TrajectoryParams::visibility(double T2) const { return 0.5 * v0 * std::cos(delta_phi(T2)) + c; }

std::vector<double> TrajectoryParams::jump_times(double lo, double hi) const {
  // a / T^2 + phi0 = q  =>  T = sqrt(a / (q - phi0))
  std::vector<double> out;
  if (!(a > 0.0)) return out;
  for (int n = 0; n < 100000; ++n) {
    const double q = kPi * (2 * n + 1);
    if (q <= phi0) continue;
    const double T = std::sqrt(a / (q - phi0));
    if (T < lo) break;
    if (T <= hi) out.push_back(T);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void to_json(nlohmann::json& j, const TrajectoryParams& p) {
  j = {{"a", p.a}, {"phi0", p.phi0}, {"a1", p.a1}, {"b1", p.b1}, {"a2", p.a2},
       {"b2", p.b2}, {"n_periods", p.n_periods}, {"v0", p.v0}, {"c", p.c}};
}

void from_json(const nlohmann::json& j, TrajectoryParams& p) {
  TrajectoryParams d;
  p.a = j.value("a", d.a);
  p.phi0 = j.value("phi0", d.phi0);
  p.a1 = j.value("a1", d.a1);
  p.b1 = j.value("b1", d.b1);
  p.a2 = j.value("a2", d.a2);
  p.b2 = j.value("b2", d.b2);
  p.n_periods = j.value("n_periods", d.n_periods);
  p.v0 = j.value("v0", d.v0);
  p.c = j.value("c", d.c);
}

double Trajectory::sigma(std::size_t i) const { return units::kappa_sigma_from_periods(n_periods) / kappa[i]; }

ModelParams Trajectory::model(std::size_t i) const {
  return ModelParams::symmetric(kappa[i], sigma(i), dphi[i]);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

Trajectory experimental_trajectory(const TrajectoryParams& params, const std::vector<double>& T2) {
  if (!(params.n_periods > 0.0)) throw ParameterError("trajectory: n_periods must be > 0");
  Trajectory t;
  t.n_periods = params.n_periods;
  t.T2 = T2;
  for (double T : T2) {
    t.kappa1.push_back(params.kappa1(T));
    t.kappa2.push_back(params.kappa2(T));
    t.kappa.push_back(0.5 * (t.kappa1.back() + t.kappa2.back()));
    t.dphi.push_back(params.delta_phi(T));
  }
  return t;
}

TrajectoryScan scan_trajectory(const TrajectoryParams& params, const std::vector<double>& T2, unsigned jobs) {
  TrajectoryScan s;
  s.trajectory = experimental_trajectory(params, T2);
  const std::size_t n = T2.size();
  s.K_M.assign(n, kNaN);
  s.K_secondary.assign(n, kNaN);
  s.lobe.assign(n, 0);
  s.ok.assign(n, 0);
  s.visibility.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.visibility[i] = params.visibility(T2[i]);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto p = s.trajectory.model(i);
    try {
      const auto r = solve_km(p);
      s.K_M[i] = r.K_M;
      s.lobe[i] = r.lobe;
      s.ok[i] = 1;
      const double beta = 0.5 * std::abs(p.delta_z());
      if (beta > 0.0) {
        const auto m = detail::lobe_maxima(p.kappa(), p.sigma, beta, 0.0);
        for (const auto& lm : m) {
          if (std::abs(lm.K - r.K_M) < 1e-12 * p.kappa()) continue;
          if (std::log(r.height) - lm.log_value <= -std::log(0.2)) s.K_secondary[i] = lm.K;
          break;
        }
      }
    } catch (const NumericalError&) {
    }
  });
  return s;
}

std::vector<Jump> find_jumps(const TrajectoryScan& scan) {
  std::vector<Jump> out;
  const auto& T = scan.trajectory.T2;
  for (std::size_t i = 0; i + 1 < T.size(); ++i) {
    if (!scan.ok[i] || !scan.ok[i + 1]) continue;
    if (scan.lobe[i] != scan.lobe[i + 1]) out.push_back({i, T[i], T[i + 1], scan.K_M[i], scan.K_M[i + 1]});
  }
  return out;
}

std::vector<Plateau> plateaus(const TrajectoryScan& scan, const std::vector<Jump>& jumps) {
  std::vector<Plateau> out;
  const std::size_t n = scan.trajectory.size();
  std::size_t start = 0;
  auto close = [&](std::size_t lo, std::size_t hi) {  // inclusive
    Plateau p;
    p.T2_lo = scan.trajectory.T2[lo];
    p.T2_hi = scan.trajectory.T2[hi];
    p.K_min = std::numeric_limits<double>::infinity();
    p.K_max = -p.K_min;
    double acc = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (!scan.ok[i]) continue;
      p.K_min = std::min(p.K_min, scan.K_M[i]);
      p.K_max = std::max(p.K_max, scan.K_M[i]);
      acc += scan.K_M[i];
      ++p.n_points;
    }
    if (p.n_points) {
      p.K_mean = acc / static_cast<double>(p.n_points);
      out.push_back(p);
    }
  };
  for (const auto& j : jumps) {
    close(start, j.index);
    start = j.index + 1;
  }
  if (start < n) close(start, n - 1);
  return out;
}

std::vector<std::size_t> visibility_minima(const TrajectoryScan& scan) {
  std::vector<std::size_t> out;
  const auto& v = scan.visibility;
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] < v[i - 1] && v[i] <= v[i + 1]) out.push_back(i);
  return out;
}

void write_csv(std::ostream& os, const TrajectoryScan& s) {
  CsvWriter w(os, "T2 us, kappa rad/um, dphi rad, K_M rad/um, K_secondary rad/um, visibility 1",
              {"T2", "kappa", "dphi", "K_M", "K_secondary", "visibility_model", "ok"});
  const auto& t = s.trajectory;
  for (std::size_t i = 0; i < t.size(); ++i)
    w.row({t.T2[i], t.kappa[i], t.dphi[i], s.K_M[i], s.K_secondary[i], s.visibility[i], double(s.ok[i])});
}

SurfaceMap km_surface(const std::vector<double>& kappa_axis, const std::vector<double>& dphi_axis,
                      double n_periods, unsigned jobs) {
  if (!(n_periods > 0.0)) throw ParameterError("km_surface: n_periods must be > 0");
  SurfaceMap m{kappa_axis, dphi_axis, {}, {}, n_periods};
  const std::size_t nk = kappa_axis.size(), nd = dphi_axis.size();
  m.K_M.assign(nk * nd, kNaN);
  m.masked.assign(nk * nd, 1);
  const double ks = units::kappa_sigma_from_periods(n_periods);
  parallel_for(nd, jobs, [&](std::size_t i) {
    for (std::size_t j = 0; j < nk; ++j) {
      try {
        const auto r = solve_km(ModelParams::symmetric(kappa_axis[j], ks / kappa_axis[j], dphi_axis[i]));
        m.K_M[i * nk + j] = r.K_M;
        m.masked[i * nk + j] = 0;
      } catch (const Error&) {
      }
    }
  });
  return m;
}

SurfaceMap km_surface_mixed(const std::vector<double>& kappa_axis, const std::vector<double>& dphi_axis,
                            double n_periods, double kappa_ratio, unsigned jobs) {
  if (!(n_periods > 0.0)) throw ParameterError("km_surface_mixed: n_periods must be > 0");
  if (!(kappa_ratio > 0.0)) throw ParameterError("km_surface_mixed: kappa ratio must be > 0");
  SurfaceMap m{kappa_axis, dphi_axis, {}, {}, n_periods};
  const std::size_t nk = kappa_axis.size(), nd = dphi_axis.size();
  m.K_M.assign(nk * nd, kNaN);
  m.masked.assign(nk * nd, 1);
  const double ks = units::kappa_sigma_from_periods(n_periods);
  parallel_for(nd * nk, jobs, [&](std::size_t idx) {
    const std::size_t i = idx / nk, j = idx % nk;
    const double kappa = kappa_axis[j];
    auto p = ModelParams::symmetric(kappa, ks / kappa, dphi_axis[i]);
    p.kappa1 = 2.0 * kappa * kappa_ratio / (1.0 + kappa_ratio);
    p.kappa2 = 2.0 * kappa / (1.0 + kappa_ratio);
    try {
      const auto r = numerical_spectrum(generate_pattern(p, default_grid(p)), p.sigma);
      m.K_M[idx] = r.primary.K;
      m.masked[idx] = 0;
    } catch (const Error&) {
    }
  });
  return m;
}

void write_csv(std::ostream& os, const SurfaceMap& m, const std::function<double(double)>& overlay) {
  std::vector<std::string> cols{"kappa", "dphi", "K_M", "masked"};
  if (overlay) cols.push_back("trajectory_kappa");
  CsvWriter w(os, "kappa rad/um, dphi rad, K_M rad/um", cols);
  for (std::size_t i = 0; i < m.dphi_axis.size(); ++i)
    for (std::size_t j = 0; j < m.kappa_axis.size(); ++j) {
      std::vector<double> row{m.kappa_axis[j], m.dphi_axis[i], m.at(i, j), double(m.masked[i * m.kappa_axis.size() + j])};
      if (overlay) row.push_back(overlay(m.dphi_axis[i]));
      w.row(row);
    }
}

double rigidity_kappa(double kappa0, double dphi, double n_periods) {
  return kappa0 * std::sqrt(dphi * dphi + kPi * kPi * n_periods * n_periods);
}

double rigidity_width(double kappa, double dphi, double n_periods) {
  const double sigma = units::kappa_sigma_from_periods(n_periods) / kappa;
  const double dz = dphi / kappa;
  return std::sqrt(4.0 * sigma * sigma + dz * dz);
}

double plateau_slope(const std::function<double(double)>& kappa_fn, double n_periods, int n) {
  if (!(n_periods > 0.0)) throw ParameterError("plateau_slope: n_periods must be > 0");
  const double h = 1e-4;
  const double x = kTwoPi * n;
  const double dk = (kappa_fn(x + h) - kappa_fn(x - h)) / (2 * h);
  if (n == 0) return dk;
  return dk - x * kappa_fn(x) / (x * x + kPi * kPi * n_periods * n_periods);
}

JumpCurves jump_vs_periods(const std::vector<int>& n_list, const std::vector<double>& n_periods) {
  JumpCurves c{n_list, n_periods, {}, {}};
  for (double np : n_periods)
    if (!(np > 0.0)) throw ParameterError("jump_vs_periods: N_p must be > 0");
  for (int n : n_list) {
    std::vector<double> row;
    for (double np : n_periods) row.push_back(jump_height(n, 1.0, units::kappa_sigma_from_periods(np)));
    c.rel_height.push_back(std::move(row));
    c.dphi_of_n.push_back(kPi * (2 * n + 1));
  }
  return c;
}

void write_csv(std::ostream& os, const JumpCurves& c) {
  CsvWriter w(os, "N_p 1, dphi rad, dK_M/kappa 1", {"n", "dphi", "N_p", "dK_over_kappa"});
  for (std::size_t a = 0; a < c.n_list.size(); ++a)
    for (std::size_t b = 0; b < c.n_periods.size(); ++b)
      w.row({double(c.n_list[a]), c.dphi_of_n[a], c.n_periods[b], c.rel_height[a][b]});
}

UniversalCurve universal_curve(double n_periods, const std::vector<double>& dphi) {
  UniversalCurve u{n_periods, dphi, {}, {}};
  for (double d : dphi) {
    const auto r = solve_km_fixed_dz_full(n_periods, d, 0.0);
    u.k_dz.push_back(r.k_dz);
    u.degenerate.push_back(r.degenerate);
  }
  return u;
}

void write_csv(std::ostream& os, const UniversalCurve& u) {
  CsvWriter w(os, "dphi rad, K_M dz rad", {"dphi", "K_M_dz", "K_M_dz_over_2pi", "degenerate"});
  for (std::size_t i = 0; i < u.dphi.size(); ++i)
    w.row({u.dphi[i], u.k_dz[i], u.k_dz[i] / kTwoPi, double(u.degenerate[i])});
}

}  // namespace moire
