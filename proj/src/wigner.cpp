#include "moire/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <ostream>

#include "moire/errors.hpp"
#include "moire/fft.hpp"
#include "moire/io.hpp"
#include "moire/parallel.hpp"

namespace moire {

using cd = std::complex<double>;
using units::kPi;

namespace {

constexpr cd kI{0.0, 1.0};

double packet_norm(const GaussianWavepacket& w) { return w.weight * std::pow(2.0 * kPi * w.width * w.width, -0.25); }

// (1/pi) Int psi_a*(x + y) psi_b(x - y) exp(2 i k y) dy
cd wigner_pair(const GaussianWavepacket& a, const GaussianWavepacket& b, double x, double k) {
  const cd aa = std::conj(a.a()), ab = b.a();
  const double ua = x - a.center, ub = x - b.center;
  const cd A = aa + ab;
  const cd B = -2.0 * aa * ua + 2.0 * ab * ub + kI * (2.0 * k - a.momentum - b.momentum);
  const cd C = -aa * ua * ua - ab * ub * ub - kI * a.momentum * ua + kI * b.momentum * ub +
               kI * (b.global_phase - a.global_phase);
  return packet_norm(a) * packet_norm(b) / kPi * std::sqrt(kPi / A) * std::exp(B * B / (4.0 * A) + C);
}

double momentum_width(const GaussianWavepacket& w) { return 1.0 / std::sqrt((1.0 / w.a()).real()); }

double pair_norm2(const GaussianWavepacket& a, const GaussianWavepacket& b) {
  return a.weight * a.weight + b.weight * b.weight + 2.0 * overlap(a, b).real();
}

void check_pair(const GaussianWavepacket& a, const GaussianWavepacket& b, const WignerGrid& g) {
  if (a.spin != b.spin) throw ModelAssumptionError("wigner: packets must share the spin state");
  if (g.nx() < 4 || g.np() < 4) throw ParameterError("wigner: grid needs at least 4 points per axis");
  if (!(g.dx() > 0) || !(g.dp() > 0)) throw ParameterError("wigner: axes must be increasing");
  const double dk = std::abs(b.momentum - a.momentum), dz = std::abs(b.center - a.center);
  if (dk > 0 && 2 * kPi / dk < 4 * g.dx())
    throw ResolutionError("wigner: cross-term fringes along x under-resolved (" + fmt_double(2 * kPi / dk) +
                          " um vs dx " + fmt_double(g.dx()) + ")");
  if (dz > 0 && 2 * kPi / dz < 4 * g.dp())
    throw ResolutionError("wigner: cross-term fringes along p under-resolved (" + fmt_double(2 * kPi / dz) +
                          " rad/um vs dp " + fmt_double(g.dp()) + ")");
}

template <class F>
WignerGrid fill(WignerGrid g, unsigned jobs, F&& f) {
  g.values.assign(g.nx() * g.np(), 0.0);
  parallel_for(g.np(), jobs, [&](std::size_t ip) {
    for (std::size_t ix = 0; ix < g.nx(); ++ix) g.at(ip, ix) = f(g.x[ix], g.p[ip]);
  });
  g.norm = g.integral();
  return g;
}

// g(u - s) along a uniform axis of n samples, by FFT phase ramp
void shift_line(std::vector<cd>& buf, double step, double s) {
  const std::size_t n = buf.size();
  auto f = fft::transform(buf);
  for (std::size_t m = 0; m < n; ++m) {
    const double q = 2 * kPi / (n * step) * (m <= n / 2 ? double(m) : double(m) - double(n));
    f[m] *= std::exp(-kI * q * s) / double(n);
  }
  buf = fft::transform(f, true);
}

void shear_x(WignerGrid& w, double alpha) {
  std::vector<cd> buf(w.nx());
  for (std::size_t ip = 0; ip < w.np(); ++ip) {
    for (std::size_t ix = 0; ix < w.nx(); ++ix) buf[ix] = w.at(ip, ix);
    shift_line(buf, w.dx(), alpha * w.p[ip]);
    for (std::size_t ix = 0; ix < w.nx(); ++ix) w.at(ip, ix) = buf[ix].real();
  }
}

void shear_p(WignerGrid& w, double beta) {
  std::vector<cd> buf(w.np());
  for (std::size_t ix = 0; ix < w.nx(); ++ix) {
    for (std::size_t ip = 0; ip < w.np(); ++ip) buf[ip] = w.at(ip, ix);
    shift_line(buf, w.dp(), beta * w.x[ix]);
    for (std::size_t ip = 0; ip < w.np(); ++ip) w.at(ip, ix) = buf[ip].real();
  }
}

std::vector<cd> fft2(const std::vector<cd>& in, std::size_t nx, std::size_t np, bool inverse) {
  std::vector<cd> out(in.size()), row(nx), col(np);
  for (std::size_t ip = 0; ip < np; ++ip) {
    std::copy(in.begin() + ip * nx, in.begin() + (ip + 1) * nx, row.begin());
    row = fft::transform(row, inverse);
    std::copy(row.begin(), row.end(), out.begin() + ip * nx);
  }
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t ip = 0; ip < np; ++ip) col[ip] = out[ip * nx + ix];
    col = fft::transform(col, inverse);
    for (std::size_t ip = 0; ip < np; ++ip) out[ip * nx + ix] = col[ip];
  }
  if (inverse)
    for (auto& v : out) v /= double(nx * np);
  return out;
}

double wrap(double a) { return std::remainder(a, 2 * kPi); }

}  // namespace

double WignerGrid::integral() const {
  double s = 0;
  for (double v : values) s += v;
  return s * dx() * dp();
}

std::vector<double> WignerGrid::x_marginal() const {
  std::vector<double> m(nx(), 0.0);
  for (std::size_t ip = 0; ip < np(); ++ip)
    for (std::size_t ix = 0; ix < nx(); ++ix) m[ix] += at(ip, ix) * dp();
  return m;
}

std::vector<double> WignerGrid::p_marginal() const {
  std::vector<double> m(np(), 0.0);
  for (std::size_t ip = 0; ip < np(); ++ip)
    for (std::size_t ix = 0; ix < nx(); ++ix) m[ip] += at(ip, ix) * dx();
  return m;
}

WignerGrid make_wigner_grid(double x_lo, double x_hi, double p_lo, double p_hi, std::size_t nx, std::size_t np) {
  if (nx < 4 || np < 4) throw ParameterError("wigner grid: at least 4 points per axis");
  if (!(x_hi > x_lo) || !(p_hi > p_lo)) throw ParameterError("wigner grid: empty range");
  WignerGrid g;
  g.x.resize(nx);
  g.p.resize(np);
  for (std::size_t i = 0; i < nx; ++i) g.x[i] = x_lo + (x_hi - x_lo) * double(i) / double(nx - 1);
  for (std::size_t i = 0; i < np; ++i) g.p[i] = p_lo + (p_hi - p_lo) * double(i) / double(np - 1);
  g.values.assign(nx * np, 0.0);
  return g;
}

WignerGrid auto_wigner_grid(const GaussianWavepacket& a, const GaussianWavepacket& b, std::size_t n, double margin) {
  const double sx = std::max(a.width, b.width);
  const double sk = std::max(momentum_width(a), momentum_width(b));
  return make_wigner_grid(std::min(a.center, b.center) - margin * sx, std::max(a.center, b.center) + margin * sx,
                          std::min(a.momentum, b.momentum) - margin * sk,
                          std::max(a.momentum, b.momentum) + margin * sk, n, n);
}

WignerGrid wigner_of_superposition(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid,
                                   unsigned jobs) {
  check_pair(a, b, grid);
  const double n2 = pair_norm2(a, b);
  return fill(std::move(grid), jobs, [&](double x, double k) {
    return (wigner_pair(a, a, x, k).real() + wigner_pair(b, b, x, k).real() + 2.0 * wigner_pair(a, b, x, k).real()) /
           n2;
  });
}

WignerGrid wigner_cross_term(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid,
                             unsigned jobs) {
  check_pair(a, b, grid);
  const double n2 = pair_norm2(a, b);
  return fill(std::move(grid), jobs, [&](double x, double k) { return 2.0 * wigner_pair(a, b, x, k).real() / n2; });
}

WignerGrid wigner_numerical(const GaussianWavepacket& a, const GaussianWavepacket& b, WignerGrid grid, unsigned jobs) {
  check_pair(a, b, grid);
  const double n2 = pair_norm2(a, b);
  const double smin = std::min(a.width, b.width);
  const double zlo = std::min(a.center - 10 * a.width, b.center - 10 * b.width);
  const double zhi = std::max(a.center + 10 * a.width, b.center + 10 * b.width);
  // highest frequency of psi*(x + y) psi(x - y) exp(2 i k y) in y
  double fmax = 2 * std::max(std::abs(grid.p.front()), std::abs(grid.p.back()));
  for (const auto* w : {&a, &b})
    fmax += std::abs(w->momentum) + std::abs(w->quad_phase) * (zhi - zlo) + 1.0 / w->width;
  const double dy = std::min(smin / 16, kPi / (2 * fmax));
  grid.values.assign(grid.nx() * grid.np(), 0.0);
  parallel_for(grid.nx(), jobs, [&](std::size_t ix) {
    const double x = grid.x[ix];
    // psi(x + y) and psi(x - y) both inside [zlo, zhi]
    const double ymax = std::min(zhi - x, x - zlo);
    if (ymax <= 0) return;
    const auto m = static_cast<long>(std::ceil(ymax / dy));
    std::vector<cd> f(2 * m + 1);
    for (long j = -m; j <= m; ++j) {
      const double y = j * dy;
      const cd s = a(x + y) + b(x + y);
      const cd t = a(x - y) + b(x - y);
      f[j + m] = std::conj(s) * t;
    }
    for (std::size_t ip = 0; ip < grid.np(); ++ip) {
      const double k = grid.p[ip];
      const cd step = std::exp(2.0 * kI * k * dy);
      cd e = std::exp(-2.0 * kI * k * (m * dy));
      cd sum = 0;
      for (long j = 0; j <= 2 * m; ++j) {
        sum += f[j] * e;
        e *= step;
      }
      grid.at(ip, ix) = (sum * dy).real() / (kPi * n2);
    }
  });
  grid.norm = grid.integral();
  return grid;
}

WignerGrid rotate_phase_space(const WignerGrid& w, double omega, double tau, double h) {
  if (!(omega > 0) || !(h > 0)) throw ParameterError("rotate_phase_space: omega and hbar/m must be > 0");
  if (!std::isfinite(tau)) throw ParameterError("rotate_phase_space: tau must be finite");
  const double theta = omega * tau;
  const int nsteps = std::max(1, static_cast<int>(std::ceil(std::abs(theta) / (0.25 * kPi) - 1e-12)));
  const double ts = theta / nsteps;
  const double alpha = h / omega * std::tan(0.5 * ts);
  const double beta = -omega / h * std::sin(ts);

  // support points carried through every shear
  double wmax = 0;
  for (double v : w.values) wmax = std::max(wmax, std::abs(v));
  std::vector<std::pair<double, double>> pts;
  for (std::size_t ip = 0; ip < w.np(); ++ip)
    for (std::size_t ix = 0; ix < w.nx(); ++ix)
      if (std::abs(w.at(ip, ix)) > 1e-10 * wmax) pts.emplace_back(w.x[ix], w.p[ip]);
  const double xlo = w.x.front(), xhi = w.x.back(), plo = w.p.front(), phi = w.p.back();
  auto check = [&](const char* stage) {
    for (const auto& [x, p] : pts)
      if (x < xlo || x > xhi || p < plo || p > phi)
        throw ClippingError(std::string("rotate_phase_space: support leaves the grid during the ") + stage +
                            " shear");
  };

  WignerGrid out = w;
  for (int s = 0; s < nsteps; ++s) {
    for (auto& [x, p] : pts) x += alpha * p;
    check("first x");
    shear_x(out, alpha);
    for (auto& [x, p] : pts) p += beta * x;
    check("p");
    shear_p(out, beta);
    for (auto& [x, p] : pts) x += alpha * p;
    check("second x");
    shear_x(out, alpha);
  }
  out.norm = out.integral();
  return out;
}

FringeInfo fringe_analysis(const WignerGrid& cross, double ref_qx, double ref_qp) {
  const std::size_t nx = cross.nx(), np = cross.np();
  std::vector<cd> in(cross.values.begin(), cross.values.end());
  auto F = fft2(in, nx, np, false);
  auto qx_of = [&](std::size_t m) { return 2 * kPi / (nx * cross.dx()) * (m <= nx / 2 ? double(m) : double(m) - double(nx)); };
  auto qp_of = [&](std::size_t m) { return 2 * kPi / (np * cross.dp()) * (m <= np / 2 ? double(m) : double(m) - double(np)); };
  if (ref_qx == 0.0 && ref_qp == 0.0) {
    double best = -1;
    for (std::size_t ip = 0; ip < np; ++ip)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double qx = qx_of(ix), qp = qp_of(ip);
        if (qx < 0 || (qx == 0 && qp <= 0)) continue;
        const double v = std::abs(F[ip * nx + ix]);
        if (v > best) {
          best = v;
          ref_qx = qx;
          ref_qp = qp;
        }
      }
  }
  // keep the half plane around +q
  const double rx = ref_qx * cross.dx(), rp = ref_qp * cross.dp();
  double sw = 0, sqx = 0, sqp = 0;
  for (std::size_t ip = 0; ip < np; ++ip)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double qx = qx_of(ix), qp = qp_of(ip);
      auto& f = F[ip * nx + ix];
      if (qx * cross.dx() * rx + qp * cross.dp() * rp <= 0) {
        f = 0;
        continue;
      }
      const double w = std::norm(f);
      sw += w;
      sqx += w * qx;
      sqp += w * qp;
    }
  if (!(sw > 0)) throw NoPeakError("fringe_analysis: no spectral weight in the selected half plane");
  FringeInfo fi;
  fi.qx = sqx / sw;
  fi.qp = sqp / sw;
  const auto A = fft2(F, nx, np, true);

  double W = 0, mx = 0, mp = 0;
  for (std::size_t ip = 0; ip < np; ++ip)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double w = std::norm(A[ip * nx + ix]);
      W += w;
      mx += w * cross.x[ix];
      mp += w * cross.p[ip];
    }
  mx /= W;
  mp /= W;
  double cxx = 0, cpp = 0, cxp = 0;
  cd ph = 0;
  for (std::size_t ip = 0; ip < np; ++ip)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const cd v = A[ip * nx + ix];
      const double w = std::norm(v);
      const double u = cross.x[ix] - mx, r = cross.p[ip] - mp;
      cxx += w * u * u;
      cpp += w * r * r;
      cxp += w * u * r;
      ph += v * std::abs(v) * std::exp(-kI * (fi.qx * u + fi.qp * r));
    }
  // |A|^2 carries the envelope squared: its covariance is half that of the envelope
  const double sxx = 2 * cxx / W, spp = 2 * cpp / W, sxp = 2 * cxp / W;
  fi.count = 2 / kPi * std::sqrt(fi.qx * fi.qx * sxx + 2 * fi.qx * fi.qp * sxp + fi.qp * fi.qp * spp);
  fi.phase = std::arg(ph);
  fi.x_c = mx;
  fi.p_c = mp;
  return fi;
}

void to_json(nlohmann::json& j, const FringeInfo& f) {
  j = {{"qx", f.qx}, {"qp", f.qp}, {"count", f.count}, {"phase", f.phase}, {"x_c", f.x_c}, {"p_c", f.p_c}};
}

void to_json(nlohmann::json& j, const RotationReport& r) {
  j = {{"omega", r.omega}, {"tau", r.tau}, {"omega_tau", r.omega * r.tau}, {"l2_error", r.l2_error},
       {"linf_error", r.linf_error}, {"norm_before", r.norm_before}, {"norm_after", r.norm_after},
       {"fringe_before", r.before}, {"fringe_after", r.after}, {"fringe_count_before", r.before.count},
       {"fringe_count_after", r.after.count}, {"count_rel_change", r.count_rel_change},
       {"fringe_phase_before", r.before.phase}, {"fringe_phase_after", r.after.phase},
       {"phase_change", r.phase_change}, {"n_periods_before", r.n_periods_before},
       {"n_periods_after", r.n_periods_after}, {"grid_points", r.n}};
}

RotationReport verify_rotation_theorem(const GaussianWavepacket& a, const GaussianWavepacket& b, double omega,
                                       double tau, double h, std::size_t n, unsigned jobs) {
  if (!(omega > 0) || !(h > 0)) throw ParameterError("verify_rotation_theorem: omega and hbar/m must be > 0");
  if (!(tau >= 0)) throw ParameterError("verify_rotation_theorem: tau must be >= 0");
  const QuadraticPotential v{0.0, 0.0, 0.0, omega * omega / h};
  const auto a1 = evolve_quadratic(a, tau, v, h);
  const auto b1 = evolve_quadratic(b, tau, v, h);

  // square in scaled coordinates x / l, k l around the origin; rotations keep the disc of radius R
  const double l = std::sqrt(h / omega);
  double R = 0;
  for (const auto* w : {&a, &b}) {
    const double s = std::max(w->width / l, momentum_width(*w) * l);
    R = std::max(R, std::hypot(w->center / l, w->momentum * l) + 7.0 * s);
  }
  const double L = 1.3 * R;
  WignerGrid g = make_wigner_grid(-L * l, L * l, -L / l, L / l, n, n);
  const auto W0 = wigner_of_superposition(a, b, g, jobs);
  const auto Wr = rotate_phase_space(W0, omega, tau, h);
  const auto W1 = wigner_of_superposition(a1, b1, g, jobs);

  RotationReport r;
  r.omega = omega;
  r.tau = tau;
  r.n = n;
  double s2 = 0, mx = 0;
  for (std::size_t i = 0; i < W1.values.size(); ++i) {
    const double d = Wr.values[i] - W1.values[i];
    s2 += d * d;
    mx = std::max(mx, std::abs(d));
  }
  r.l2_error = std::sqrt(s2 * g.dx() * g.dp());
  r.linf_error = mx;
  r.norm_before = W0.norm;
  r.norm_after = Wr.norm;

  r.before = fringe_analysis(wigner_cross_term(a, b, g, jobs));
  const double th = omega * tau, c = std::cos(th), s = std::sin(th);
  const double qx = c * r.before.qx + omega / h * s * r.before.qp;
  const double qp = -h / omega * s * r.before.qx + c * r.before.qp;
  r.after = fringe_analysis(wigner_cross_term(a1, b1, g, jobs), qx, qp);
  r.count_rel_change = r.after.count / r.before.count - 1;
  r.phase_change = wrap(r.after.phase - r.before.phase);
  r.n_periods_before = pair_record(a, b, 0.0, h).n_periods;
  r.n_periods_after = pair_record(a1, b1, tau, h).n_periods;
  return r;
}

void write_binary(const std::filesystem::path& path, const WignerGrid& w) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(w.values.data()), static_cast<std::streamsize>(w.values.size() * sizeof(double)));
  }
  nlohmann::json j = {{"format", "float64 little-endian, row-major, p index outer"},
                      {"units", {{"x", "um"}, {"p", "rad/um"}, {"W", "1/(um rad/um)"}}},
                      {"nx", w.nx()}, {"np", w.np()}, {"x0", w.x.front()}, {"x1", w.x.back()},
                      {"p0", w.p.front()}, {"p1", w.p.back()}, {"norm", w.norm}};
  write_json_file(path.string() + ".json", j);
}

WignerGrid read_binary(const std::filesystem::path& path) {
  const auto j = read_json_file(path.string() + ".json");
  WignerGrid w = make_wigner_grid(j.at("x0").get<double>(), j.at("x1").get<double>(), j.at("p0").get<double>(),
                                  j.at("p1").get<double>(), j.at("nx").get<std::size_t>(),
                                  j.at("np").get<std::size_t>());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  is.read(reinterpret_cast<char*>(w.values.data()), static_cast<std::streamsize>(w.values.size() * sizeof(double)));
  if (!is) throw ConfigError("truncated Wigner file " + path.string());
  w.norm = j.at("norm").get<double>();
  return w;
}

void write_csv(std::ostream& os, const WignerGrid& w) {
  CsvWriter cw(os, "x um, p rad/um, W 1/(um rad/um)", {"x", "p", "W"});
  for (std::size_t ip = 0; ip < w.np(); ++ip)
    for (std::size_t ix = 0; ix < w.nx(); ++ix) cw.row({w.x[ix], w.p[ip], w.at(ip, ix)});
}

}  // namespace moire
