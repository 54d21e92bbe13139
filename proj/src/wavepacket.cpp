#include "moire/wavepacket.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/roots.hpp"
#include "moire/spectral.hpp"

namespace moire {

using cd = std::complex<double>;
using units::kPi;

namespace {

constexpr cd kI{0.0, 1.0};

// Gauss-Legendre nodes/weights on [0, 1]
struct GaussLegendre {
  static constexpr int n = 12;
  std::array<double, n> x{}, w{};
  GaussLegendre() {
    for (int i = 0; i < n; ++i) {
      double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1, p1 = t;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (t * p1 - p0) / (t * t - 1);
        const double dt = p1 / dp;
        t -= dt;
        if (std::abs(dt) < 1e-16) break;
      }
      x[i] = 0.5 * (1 - t);
      w[i] = 1.0 / ((1 - t * t) * dp * dp);
    }
  }
};

const GaussLegendre& gl() {
  static const GaussLegendre g;
  return g;
}

// C = cos(w t), S = sin(w t)/w, D = (1 - C)/w^2 for w^2 of either sign
void csd(double w2, double t, double& C, double& S, double& D) {
  const double x = w2 * t * t;
  if (std::abs(x) < 1e-3) {
    C = 1 - x / 2 + x * x / 24 - x * x * x / 720;
    S = t * (1 - x / 6 + x * x / 120 - x * x * x / 5040);
    D = t * t * (0.5 - x / 24 + x * x / 720 - x * x * x / 40320);
    return;
  }
  if (w2 > 0) {
    const double w = std::sqrt(w2);
    C = std::cos(w * t);
    S = std::sin(w * t) / w;
  } else {
    const double w = std::sqrt(-w2);
    C = std::cosh(w * t);
    S = std::sinh(w * t) / w;
  }
  D = (1 - C) / w2;
}

GaussianWavepacket quad_step(const GaussianWavepacket& wp, double dt, const QuadraticPotential& v, double h) {
  const double w2 = h * v.v2;
  double C, S, D;
  csd(w2, dt, C, S, D);
  const double d0 = wp.center - v.z_ref;
  const double u0 = h * wp.momentum;
  auto traj = [&](double t, double& d, double& u) {
    double c, s, dd;
    csd(w2, t, c, s, dd);
    d = d0 * c + u0 * s - h * v.v1 * dd;
    u = -w2 * d0 * s + u0 * c - h * v.v1 * s;
  };
  double action = 0;
  const auto& g = gl();
  for (int i = 0; i < GaussLegendre::n; ++i) {
    double d, u;
    traj(g.x[i] * dt, d, u);
    action += g.w[i] * (0.5 * u * u / h - (v.v0 + v.v1 * d + 0.5 * v.v2 * d * d));
  }
  action *= dt;

  GaussianWavepacket out = wp;
  double d, u;
  traj(dt, d, u);
  out.center = v.z_ref + d;
  out.momentum = u / h;
  const cd a0 = wp.a();
  const cd Q = C + 2.0 * kI * h * a0 * S;
  const cd Qp = -w2 * S + 2.0 * kI * h * a0 * C;
  out.set_a(-kI / (2.0 * h) * Qp / Q);
  out.global_phase = wp.global_phase + action - 0.5 * std::arg(Q);
  return out;
}

bool same_shape(const GaussianWavepacket& a, const GaussianWavepacket& b) {
  auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)}); };
  return a.spin == b.spin && a.path == b.path && close(a.center, b.center) && close(a.momentum, b.momentum) &&
         close(a.width, b.width) && close(a.quad_phase, b.quad_phase);
}

}  // namespace

cd GaussianWavepacket::a() const { return {0.25 / (width * width), -0.5 * quad_phase}; }

void GaussianWavepacket::set_a(cd a) {
  width = 0.5 / std::sqrt(a.real());
  quad_phase = -2.0 * a.imag();
}

cd GaussianWavepacket::operator()(double z) const {
  const double u = z - center;
  const double norm = weight * std::pow(2.0 * kPi * width * width, -0.25);
  return norm * std::exp(-a() * u * u + kI * (momentum * u + global_phase));
}

void to_json(nlohmann::json& j, const GaussianWavepacket& w) {
  j = {{"center", w.center}, {"momentum", w.momentum}, {"width", w.width}, {"quad_phase", w.quad_phase},
       {"global_phase", w.global_phase}, {"spin", w.spin}, {"weight", w.weight}, {"path", w.path}};
}

void from_json(const nlohmann::json& j, GaussianWavepacket& w) {
  const GaussianWavepacket d;
  w.center = j.value("center", d.center);
  w.momentum = j.value("momentum", d.momentum);
  w.width = j.value("width", d.width);
  w.quad_phase = j.value("quad_phase", d.quad_phase);
  w.global_phase = j.value("global_phase", d.global_phase);
  w.spin = j.value("spin", d.spin);
  w.weight = j.value("weight", d.weight);
  w.path = j.value("path", d.path);
  if (!(w.width > 0)) throw ParameterError("wavepacket width must be > 0");
}

double QuadraticPotential::operator()(double z) const {
  const double d = z - z_ref;
  return v0 + v1 * d + 0.5 * v2 * d * d;
}

GaussianWavepacket evolve_free(const GaussianWavepacket& wp, double dt, bool gravity, double hbar_over_m) {
  QuadraticPotential v{wp.center, 0.0, 0.0, 0.0};
  if (gravity) {
    v.v0 = -units::kGravity / hbar_over_m * wp.center;
    v.v1 = -units::kGravity / hbar_over_m;
  }
  return evolve_quadratic(wp, dt, v, hbar_over_m);
}

GaussianWavepacket evolve_quadratic(const GaussianWavepacket& wp, double dt, const QuadraticPotential& v,
                                    double hbar_over_m, double scale_length) {
  if (!(dt >= 0.0)) throw ParameterError("evolve: dt must be >= 0");
  if (!(hbar_over_m > 0.0)) throw ParameterError("evolve: hbar/m must be > 0");
  if (dt == 0.0) return wp;
  const double w2 = hbar_over_m * v.v2;
  // keep the phase of Q on one branch: w t <= pi/2 per sub-step
  int nsub = 1;
  if (w2 > 0) nsub = std::max(1, static_cast<int>(std::ceil(std::sqrt(w2) * dt / (0.5 * kPi))));
  GaussianWavepacket out = wp;
  for (int i = 0; i < nsub; ++i) out = quad_step(out, dt / nsub, v, hbar_over_m);
  if (scale_length > 0.0 && std::abs(out.center - wp.center) > 0.1 * scale_length)
    throw StepSizeError("evolve_quadratic: centre moved more than 0.1 field scale lengths");
  return out;
}

std::vector<GaussianWavepacket> apply_rf_pulse(const std::vector<GaussianWavepacket>& branches, double angle) {
  if (!(angle >= 0.0 && angle <= kPi)) throw ParameterError("apply_rf_pulse: angle must be in [0, pi]");
  const double c = std::cos(0.5 * angle), s = std::sin(0.5 * angle);
  std::vector<GaussianWavepacket> out;
  auto add = [&](GaussianWavepacket w, double amp, int spin) {
    if (amp == 0.0 || w.weight == 0.0) return;
    w.spin = spin;
    if (amp < 0) w.global_phase += kPi;
    w.weight *= std::abs(amp);
    for (auto& o : out) {
      if (!same_shape(o, w)) continue;
      const cd sum = o.weight + w.weight * std::exp(kI * (w.global_phase - o.global_phase));
      o.global_phase += std::arg(sum);
      o.weight = std::abs(sum);
      return;
    }
    out.push_back(w);
  };
  for (const auto& b : branches) {
    if (b.spin == 1) {
      add(b, c, 1);
      add(b, -s, 2);
    } else {
      add(b, s, 1);
      add(b, c, 2);
    }
  }
  std::erase_if(out, [](const GaussianWavepacket& w) { return w.weight < 1e-14; });
  return out;
}

cd overlap(const GaussianWavepacket& a, const GaussianWavepacket& b) {
  const double zm = 0.5 * (a.center + b.center);
  const double qa = a.center - zm, qb = b.center - zm;
  const cd aa = std::conj(a.a()), ab = b.a();
  const cd A = aa + ab;
  const cd B = 2.0 * aa * qa - kI * a.momentum + 2.0 * ab * qb + kI * b.momentum;
  const cd C = -aa * qa * qa + kI * a.momentum * qa - ab * qb * qb - kI * b.momentum * qb;
  const double na = a.weight * std::pow(2.0 * kPi * a.width * a.width, -0.25);
  const double nb = b.weight * std::pow(2.0 * kPi * b.width * b.width, -0.25);
  const cd val = std::sqrt(kPi / A) * std::exp(B * B / (4.0 * A) + C);
  return na * nb * val * std::exp(kI * (b.global_phase - a.global_phase));
}

ConservationRecord pair_record(const GaussianWavepacket& a, const GaussianWavepacket& b, double t, double h) {
  ConservationRecord r;
  r.t = t;
  r.spin = a.spin == b.spin ? a.spin : 0;
  const cd o = overlap(a, b) / (a.weight * b.weight);
  r.Gamma = std::sqrt(std::max(0.0, -2.0 * std::log(std::abs(o))));
  r.chi = std::arg(o);
  r.sigma = 0.5 * (a.width + b.width);
  const double alpha = 0.5 * (a.quad_phase + b.quad_phase);
  r.delta_z = b.center - a.center;
  r.delta_k = b.momentum - a.momentum;
  r.z_mean = 0.5 * (a.center + b.center);
  r.kappa = alpha * r.delta_z - r.delta_k;
  r.kappa_sigma = r.kappa * r.sigma;
  r.n_periods = units::periods_from_kappa_sigma(r.kappa_sigma);
  r.Gamma_formula = std::hypot(r.delta_z / (2 * r.sigma), r.kappa_sigma);
  r.width_mismatch = std::abs(b.width - a.width) / r.sigma;
  // 1/a(t) = 1/a(t_m) + 2 i h (t - t_m) in free flight
  const cd inv = 1.0 / (0.5 * (a.a() + b.a()));
  const double trel = -inv.imag() / (2 * h);
  r.t_focus = t + trel;
  r.sigma_m = 0.5 * std::sqrt(inv.real());
  const double Tf = -trel;
  r.d_focus = r.delta_z + h * r.delta_k * trel;
  r.xi = 2 * r.sigma_m * r.sigma_m / (h * Tf);
  r.kappa_xi0 = r.d_focus / (h * Tf);
  return r;
}

ConservationRecord conservation_check(const GaussianWavepacket& a, const GaussianWavepacket& b, double h,
                                      double width_tol, bool require_same_spin) {
  if (require_same_spin && a.spin != b.spin) throw ModelAssumptionError("conservation_check: packets differ in spin");
  const double mism = std::abs(b.width - a.width) / (0.5 * (a.width + b.width));
  if (mism > width_tol)
    throw ModelAssumptionError("conservation_check: widths differ by " + fmt_double(mism) + " relative");
  return pair_record(a, b, 0.0, h);
}

void to_json(nlohmann::json& j, const ConservationRecord& r) {
  j = {{"t", r.t}, {"label", r.label}, {"spin", r.spin}, {"Gamma", r.Gamma}, {"chi", r.chi},
       {"Gamma_formula", r.Gamma_formula}, {"kappa", r.kappa}, {"sigma", r.sigma}, {"delta_z", r.delta_z},
       {"delta_k", r.delta_k}, {"z_mean", r.z_mean}, {"kappa_sigma", r.kappa_sigma}, {"N_p", r.n_periods},
       {"width_mismatch", r.width_mismatch}, {"t_focus", r.t_focus}, {"sigma_m", r.sigma_m}, {"xi", r.xi},
       {"d_focus", r.d_focus}, {"kappa_xi0", r.kappa_xi0}};
}

void write_csv(std::ostream& os, const std::vector<ConservationRecord>& records) {
  os << "# units: t us, Gamma 1, chi rad, kappa rad/um, sigma um, delta_z um\n";
  os << "label,spin,t,Gamma,chi,kappa_sigma,N_p,kappa,sigma,delta_z,Gamma_formula,width_mismatch\n";
  for (const auto& r : records) {
    os << r.label << ',' << r.spin;
    for (double v : {r.t, r.Gamma, r.chi, r.kappa_sigma, r.n_periods, r.kappa, r.sigma, r.delta_z, r.Gamma_formula,
                     r.width_mismatch})
      os << ',' << fmt_double(v);
    os << '\n';
  }
}

// ---- field model ----

void FieldModel::field(double z, int polarity, bool bias_on, double& B, double& dB, double& d2B) const {
  double by = 0, dby = 0, d2by = 0;
  if (bias_on) {
    by += bias_G + bias_gradient_G_per_um * (z - z_grad_ref);
    dby += bias_gradient_G_per_um;
  }
  if (polarity != 0) {
    if (!(z > 0.0)) throw DomainError("field: z must be > 0 (below the chip)");
    const double k = polarity * units::kMu0Over2Pi * current_A;
    const double p2 = wire_pitch_um * wire_pitch_um;
    const double r2 = z * z + p2;
    const double X = centre_factor, O = outer_factor;
    by += k * (X / z + 2 * O * z / r2);
    dby += k * (-X / (z * z) + 2 * O * (p2 - z * z) / (r2 * r2));
    d2by += k * (2 * X / (z * z * z) + 2 * O * (2 * z * z * z - 6 * z * p2) / (r2 * r2 * r2));
  }
  const double s = by < 0 ? -1.0 : 1.0;
  B = s * by;
  dB = s * dby;
  d2B = s * d2by;
}

QuadraticPotential FieldModel::potential(double z, int spin, int polarity, bool bias_on, bool gravity, double h,
                                         bool spin_independent) const {
  double B, dB, d2B;
  field(z, polarity, bias_on, B, dB, d2B);
  const int mf = spin_independent ? 1 : spin;
  const double c = units::kLandeF2 * mf * units::kBohrMagnetonOverHbar;
  QuadraticPotential v{z, c * B, c * dB, c * d2B};
  if (gravity) {
    v.v0 -= units::kGravity / h * z;
    v.v1 -= units::kGravity / h;
  }
  return v;
}

// ---- sequence ----

void SequenceConfig::validate() const {
  for (double d : {t_rf1, T1, Td1, rf2_delay, T2, rf3_delay, Td2, T3, bias_off_delay, Tf})
    if (!(d >= 0.0) || !std::isfinite(d)) throw ParameterError("sequence: durations must be >= 0");
  if (rf2_delay > Td1) throw ParameterError("sequence: rf2_delay must lie within Td1");
  if (!(hbar_over_m > 0.0)) throw ParameterError("sequence: hbar_over_m must be > 0");
  if (!(z0 > 0.0)) throw ParameterError("sequence: z0 must be > 0");
  if (!(sigma0 > 0.0)) throw ParameterError("sequence: sigma0 must be > 0");
  if (!(n_periods_target > 0.0)) throw ParameterError("sequence: n_periods_target must be > 0");
  if (grid_points < 16) throw ParameterError("sequence: grid_points must be >= 16");
  if (!(step_tol > 0.0) || !(max_step > 0.0)) throw ParameterError("sequence: step controls must be > 0");
}

void to_json(nlohmann::json& j, const SequenceConfig& c) {
  j = {{"t_rf1", c.t_rf1}, {"T1", c.T1}, {"Td1", c.Td1}, {"rf2_delay", c.rf2_delay}, {"T2", c.T2},
       {"rf3_delay", c.rf3_delay}, {"Td2", c.Td2}, {"T3", c.T3}, {"bias_off_delay", c.bias_off_delay},
       {"Tf", c.Tf}, {"hbar_over_m", c.hbar_over_m}, {"omega_z", c.omega_z}, {"z0", c.z0},
       {"sigma0", c.sigma0}, {"gravity", c.gravity}, {"spin_independent", c.spin_independent},
       {"calibrate", c.calibrate}, {"n_periods_target", c.n_periods_target}, {"grid_points", c.grid_points},
       {"step_tol", c.step_tol}, {"max_step", c.max_step},
       {"field",
        {{"bias_G", c.field.bias_G}, {"bias_gradient_G_per_um", c.field.bias_gradient_G_per_um},
         {"current_A", c.field.current_A}, {"wire_pitch_um", c.field.wire_pitch_um},
         {"centre_factor", c.field.centre_factor}, {"outer_factor", c.field.outer_factor},
         {"z_grad_ref", c.field.z_grad_ref}}}};
}

void from_json(const nlohmann::json& j, SequenceConfig& c) {
  const SequenceConfig d;
  c.t_rf1 = j.value("t_rf1", d.t_rf1);
  c.T1 = j.value("T1", d.T1);
  c.Td1 = j.value("Td1", d.Td1);
  c.rf2_delay = j.value("rf2_delay", d.rf2_delay);
  c.T2 = j.value("T2", d.T2);
  c.rf3_delay = j.value("rf3_delay", d.rf3_delay);
  c.Td2 = j.value("Td2", d.Td2);
  c.T3 = j.value("T3", d.T3);
  c.bias_off_delay = j.value("bias_off_delay", d.bias_off_delay);
  c.Tf = j.value("Tf", d.Tf);
  c.hbar_over_m = j.value("hbar_over_m", d.hbar_over_m);
  c.omega_z = j.value("omega_z", d.omega_z);
  c.z0 = j.value("z0", d.z0);
  c.sigma0 = j.value("sigma0", d.sigma0);
  c.gravity = j.value("gravity", d.gravity);
  c.spin_independent = j.value("spin_independent", d.spin_independent);
  c.calibrate = j.value("calibrate", d.calibrate);
  c.n_periods_target = j.value("n_periods_target", d.n_periods_target);
  c.grid_points = j.value("grid_points", d.grid_points);
  c.step_tol = j.value("step_tol", d.step_tol);
  c.max_step = j.value("max_step", d.max_step);
  c.field = d.field;
  if (j.contains("field")) {
    const auto& f = j.at("field");
    c.field.bias_G = f.value("bias_G", d.field.bias_G);
    c.field.bias_gradient_G_per_um = f.value("bias_gradient_G_per_um", d.field.bias_gradient_G_per_um);
    c.field.current_A = f.value("current_A", d.field.current_A);
    c.field.wire_pitch_um = f.value("wire_pitch_um", d.field.wire_pitch_um);
    c.field.centre_factor = f.value("centre_factor", d.field.centre_factor);
    c.field.outer_factor = f.value("outer_factor", d.field.outer_factor);
    c.field.z_grad_ref = f.value("z_grad_ref", d.field.z_grad_ref);
  }
}

namespace {

class Sequencer {
 public:
  Sequencer(const SequenceConfig& cfg, const FieldModel& field) : cfg_(cfg), field_(field) {
    GaussianWavepacket w;
    w.center = cfg.z0;
    w.width = cfg.sigma0;
    w.spin = 2;
    packets_.push_back(w);
  }

  std::vector<GaussianWavepacket> packets_;
  std::vector<ConservationRecord> records_;
  double t_ = 0.0;
  double discarded_w2_ = 0.0;

  void free(double dt, bool bias_on) {
    if (dt <= 0.0) return;
    for (auto& p : packets_) {
      // linear potential: exact in one step
      const auto v = field_.potential(p.center, p.spin, 0, bias_on, cfg_.gravity, cfg_.hbar_over_m, cfg_.spin_independent);
      p = evolve_quadratic(p, dt, v, cfg_.hbar_over_m);
    }
    t_ += dt;
  }

  void pulse(double duration, int polarity) {
    if (duration <= 0.0) return;
    for (int spin : {1, 2}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < packets_.size(); ++i)
        if (packets_[i].spin == spin) idx.push_back(i);
      if (idx.empty()) continue;
      std::vector<GaussianWavepacket> g;
      for (auto i : idx) g.push_back(packets_[i]);
      g = advance_group(g, duration, polarity);
      for (std::size_t k = 0; k < idx.size(); ++k) packets_[idx[k]] = g[k];
    }
    t_ += duration;
  }

  void rf(double angle) { packets_ = apply_rf_pulse(packets_, angle); }

  void checkpoint(const std::string& label) {
    for (int spin : {1, 2}) {
      const GaussianWavepacket *a = nullptr, *b = nullptr;
      for (const auto& p : packets_) {
        if (p.spin != spin) continue;
        if (p.path == 0) a = &p;
        if (p.path == 1) b = &p;
      }
      if (a && b) {
        auto r = pair_record(*a, *b, t_, cfg_.hbar_over_m);
        r.label = label;
        records_.push_back(r);
      }
    }
  }

  void mixed_checkpoint(const std::string& label) {
    const GaussianWavepacket *a = nullptr, *b = nullptr;
    for (const auto& p : packets_) {
      if (p.path == 0) a = &p;
      if (p.path == 1) b = &p;
    }
    if (a && b) {
      auto r = pair_record(*a, *b, t_, cfg_.hbar_over_m);
      r.label = label;
      records_.push_back(r);
    }
  }

  void discard_spin(int spin) {
    for (const auto& p : packets_)
      if (p.spin == spin) discarded_w2_ += p.weight * p.weight;
    std::erase_if(packets_, [&](const GaussianWavepacket& p) { return p.spin == spin; });
  }

 private:
  const SequenceConfig& cfg_;
  const FieldModel& field_;

  double centroid(const std::vector<GaussianWavepacket>& g) const {
    double c = 0;
    for (const auto& p : g) c += p.center;
    return c / static_cast<double>(g.size());
  }

  std::vector<GaussianWavepacket> shared_step(const std::vector<GaussianWavepacket>& g, double dt, double zr,
                                              int polarity) const {
    const int spin = g.front().spin;
    const auto v = field_.potential(zr, spin, polarity, true, cfg_.gravity, cfg_.hbar_over_m, cfg_.spin_independent);
    std::vector<GaussianWavepacket> out;
    for (const auto& p : g) out.push_back(evolve_quadratic(p, dt, v, cfg_.hbar_over_m, zr));
    return out;
  }

  // one step with the quadratic expanded at the predicted midpoint centroid
  std::vector<GaussianWavepacket> step(const std::vector<GaussianWavepacket>& g, double dt, int polarity) const {
    const auto half = shared_step(g, 0.5 * dt, centroid(g), polarity);
    return shared_step(g, dt, centroid(half), polarity);
  }

  std::vector<GaussianWavepacket> advance_group(std::vector<GaussianWavepacket> g, double duration, int polarity) const {
    double done = 0.0;
    double dt = std::min(cfg_.max_step, duration);
    while (done < duration) {
      dt = std::min(dt, duration - done);
      std::vector<GaussianWavepacket> full, two;
      bool ok = true;
      try {
        full = step(g, dt, polarity);
        two = step(step(g, 0.5 * dt, polarity), 0.5 * dt, polarity);
      } catch (const StepSizeError&) {
        ok = false;
      }
      double err = 0;
      if (ok)
        for (std::size_t i = 0; i < g.size(); ++i) {
          err = std::max(err, std::abs(full[i].center - two[i].center));
          err = std::max(err, std::abs(full[i].momentum - two[i].momentum));
          err = std::max(err, std::abs(full[i].width - two[i].width));
          err = std::max(err, std::abs(full[i].quad_phase - two[i].quad_phase) * full[i].width * full[i].width);
        }
      if (ok && err <= cfg_.step_tol) {
        g = std::move(two);
        done += dt;
        const double grow = err > 0 ? 0.9 * std::cbrt(cfg_.step_tol / err) : 2.0;
        dt = std::min(cfg_.max_step, dt * std::clamp(grow, 0.3, 2.0));
      } else {
        dt *= 0.5;
        if (dt < 1e-9) throw StepSizeError("sequence: step size underflow");
      }
    }
    return g;
  }
};


// runs release -> RF2 and returns Gamma of the (a, b) pair
double gamma_after_rf2(const SequenceConfig& cfg, const FieldModel& f) {
  Sequencer s(cfg, f);
  s.free(cfg.t_rf1, true);
  s.rf(0.5 * kPi);
  s.pulse(cfg.T1, +1);
  for (auto& p : s.packets_) p.path = p.spin == 2 ? 1 : 0;
  s.free(cfg.rf2_delay, true);
  s.mixed_checkpoint("rf2");
  return s.records_.back().Gamma;
}

}  // namespace

double calibrate_field(const SequenceConfig& cfg) {
  cfg.validate();
  const double target = units::kappa_sigma_from_periods(cfg.n_periods_target);
  FieldModel f = cfg.field;
  auto g = [&](double X) {
    f.centre_factor = X;
    return gamma_after_rf2(cfg, f) - target;
  };
  double lo = 0.0, hi = 2.0;
  while (g(hi) < 0.0) {
    lo = hi;
    hi *= 2;
    if (hi > 1e4) throw SolverError("calibrate_field: target Gamma unreachable");
  }
  if (g(lo) > 0.0) throw SolverError("calibrate_field: target Gamma below the bias-only splitting");
  return roots::bisect(g, lo, hi, 1e-13).x;
}

double SequenceResult::gamma_drift() const {
  if (records.size() <= first_conserved) return 0.0;
  const double g0 = records[first_conserved].Gamma;
  double m = 0;
  for (std::size_t i = first_conserved; i < records.size(); ++i) m = std::max(m, std::abs(records[i].Gamma / g0 - 1));
  return m;
}

nlohmann::json SequenceResult::summary() const {
  nlohmann::json j;
  j["kappa1"] = pattern1.kappa;
  j["kappa2"] = pattern2.kappa;
  j["sigma1"] = pattern1.sigma;
  j["sigma2"] = pattern2.sigma;
  j["N_p1"] = pattern1.n_periods;
  j["N_p2"] = pattern2.n_periods;
  j["theta1"] = pattern1.theta;
  j["theta2"] = pattern2.theta;
  j["delta_z"] = params.delta_z();
  j["delta_phi"] = params.delta_phi();
  j["sigma"] = params.sigma;
  j["gamma_drift"] = gamma_drift();
  j["theta_difference"] = theta_difference();
  j["theta_fringe1"] = pattern1.theta_fringe;
  j["theta_fringe2"] = pattern2.theta_fringe;
  j["theta_fringe_difference"] = pattern1.theta_fringe - pattern2.theta_fringe;
  j["centre_factor"] = centre_factor;
  j["weight2_total"] = weight2_total;
  j["t_observe"] = t_observe;
  j["warnings"] = warnings;
  if (!records.empty()) {
    j["Gamma"] = records[first_conserved].Gamma;
    const auto& last = records.back();
    j["sigma_m"] = last.sigma_m;
    j["xi"] = last.xi;
    j["dz_over_2sigma_sq_ratio"] = std::pow(last.delta_z / (2 * last.sigma), 2) / std::pow(last.kappa_sigma, 2);
  }
  try {
    const auto r = numerical_spectrum(moire, params.sigma);
    j["K_M"] = peak_record(r);
  } catch (const Error& e) {
    j["K_M_error"] = e.what();
  }
  return j;
}

SequenceResult run_sequence(const SequenceConfig& cfg) {
  cfg.validate();
  SequenceResult res;
  FieldModel field = cfg.field;
  if (cfg.calibrate) field.centre_factor = calibrate_field(cfg);
  res.centre_factor = field.centre_factor;

  Sequencer s(cfg, field);
  s.free(cfg.t_rf1, true);
  s.rf(0.5 * kPi);
  s.pulse(cfg.T1, +1);
  for (auto& p : s.packets_) p.path = p.spin == 2 ? 1 : 0;
  s.mixed_checkpoint("T1");
  s.free(cfg.rf2_delay, true);
  s.rf(0.5 * kPi);
  res.first_conserved = s.records_.size();
  s.checkpoint("RF2");
  // early spin-2 pair leaves with T2; only spin 1 is tracked
  std::erase_if(s.records_, [&](const ConservationRecord& r) { return r.label == "RF2" && r.spin == 2; });
  const double t2_start = s.t_;
  s.free(cfg.Td1 - cfg.rf2_delay, true);
  const double t2_start_actual = s.t_;
  (void)t2_start;
  s.pulse(cfg.T2, +1);
  s.discard_spin(2);
  s.checkpoint("T2");
  s.free(cfg.rf3_delay, true);
  s.rf(0.5 * kPi);
  s.checkpoint("RF3");
  double t3 = t2_start_actual + cfg.Td2;
  const double earliest = s.t_ + 10.0;
  if (t3 < earliest) {
    res.warnings.push_back("T3 moved from " + fmt_double(t3) + " us to " + fmt_double(earliest) +
                           " us to follow RF3");
    t3 = earliest;
  }
  s.free(t3 - s.t_, true);
  s.pulse(cfg.T3, -1);
  s.checkpoint("T3");
  s.free(cfg.bias_off_delay, true);
  s.checkpoint("bias_off");
  s.free(cfg.Tf, false);
  s.checkpoint("observe");

  if (s.packets_.size() != 4) throw SequenceError("sequence: expected 4 final packets, got " + std::to_string(s.packets_.size()));
  res.final_packets = s.packets_;
  res.records = s.records_;
  res.t_observe = s.t_;
  double w2 = s.discarded_w2_;
  for (const auto& p : s.packets_) w2 += p.weight * p.weight;
  res.weight2_total = w2;

  // per-spin observables from the final records
  for (int spin : {1, 2}) {
    const ConservationRecord* r = nullptr;
    for (const auto& rec : res.records)
      if (rec.label == "observe" && rec.spin == spin) r = &rec;
    if (!r) throw SequenceError("sequence: missing final pair for spin " + std::to_string(spin));
    const GaussianWavepacket *pa = nullptr, *pb = nullptr;
    for (const auto& p : s.packets_)
      if (p.spin == spin) (p.path == 0 ? pa : pb) = &p;
    // fringe phase at the pair midpoint; equals chi only for equal widths
    const double fringe = std::arg(std::conj((*pa)(r->z_mean)) * (*pb)(r->z_mean));
    SpinPattern sp{spin, r->kappa, r->sigma, r->z_mean, 0.5 * kPi - 0.5 * r->chi, 0.5 * kPi - 0.5 * fringe, r->chi,
                   r->delta_z, r->delta_k, r->n_periods, r->width_mismatch};
    (spin == 1 ? res.pattern1 : res.pattern2) = sp;
  }

  double lo = 1e300, hi = -1e300, wmax = 0;
  for (const auto& p : s.packets_) {
    lo = std::min(lo, p.center);
    hi = std::max(hi, p.center);
    wmax = std::max(wmax, p.width);
  }
  const Grid grid = Grid::spanning(lo - 6 * wmax, hi + 6 * wmax, cfg.grid_points);
  res.spin1 = {grid.z0, grid.dz, std::vector<double>(grid.n)};
  res.spin2 = res.spin1;
  res.moire = res.spin1;
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double z = grid.z(i);
    cd p1 = 0, p2 = 0;
    for (const auto& p : s.packets_) (p.spin == 1 ? p1 : p2) += p(z);
    res.spin1.values[i] = std::norm(p1);
    res.spin2.values[i] = std::norm(p2);
    res.moire.values[i] = res.spin1.values[i] + res.spin2.values[i];
  }

  ModelParams mp;
  mp.kappa1 = res.pattern1.kappa;
  mp.kappa2 = res.pattern2.kappa;
  mp.z1 = res.pattern1.z;
  mp.z2 = res.pattern2.z;
  mp.theta1 = res.pattern1.theta_fringe;
  mp.theta2 = res.pattern2.theta_fringe;
  mp.sigma = 0.5 * (res.pattern1.sigma + res.pattern2.sigma);
  res.params = mp;
  return res;
}

}  // namespace moire
