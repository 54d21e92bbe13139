#include "moire/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/units.hpp"

namespace moire {

namespace {

double gauss(double u, double sigma) { return std::exp(-u * u / (2.0 * sigma * sigma)); }

void require_common_kappa(const ModelParams& p, const char* what) {
  if (!p.equal_kappa())
    throw UnsupportedFormError(std::string(what) + ": requires kappa1 == kappa2");
}

void check_grid(const ModelParams& p, const Grid& g) {
  if (g.n < 2 || !(g.dz > 0.0) || !std::isfinite(g.z0))
    throw SamplingError("grid needs n >= 2 and dz > 0");
  const double kmax = std::max(p.kappa1, p.kappa2);
  if (g.dz > units::kPi / (4.0 * kmax) * (1.0 + 1e-12))
    throw SamplingError("grid too coarse: dz = " + fmt_double(g.dz) + " > pi/(4 kappa) = " +
                        fmt_double(units::kPi / (4.0 * kmax)));
  const double lo = std::min(p.z1, p.z2) - 4.0 * p.sigma;
  const double hi = std::max(p.z1, p.z2) + 4.0 * p.sigma;
  const double slack = 1e-9 * (std::abs(lo) + std::abs(hi) + p.sigma);
  if (g.z0 > lo + slack || g.z_end() < hi - slack)
    throw SamplingError("grid [" + fmt_double(g.z0) + ", " + fmt_double(g.z_end()) +
                        "] does not cover [" + fmt_double(lo) + ", " + fmt_double(hi) + "]");
}

}  // namespace

double ModelParams::n_periods() const { return units::periods_from_kappa_sigma(kappa() * sigma); }

bool ModelParams::equal_kappa() const {
  return std::abs(kappa1 - kappa2) <= 1e-12 * std::max(std::abs(kappa1), std::abs(kappa2));
}

bool ModelParams::equal_theta() const { return std::abs(theta1 - theta2) <= 1e-12; }

void ModelParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be > 0");
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0) || !std::isfinite(kappa1) || !std::isfinite(kappa2))
    throw ParameterError("kappa1, kappa2 must be finite and > 0");
  for (double v : {theta1, theta2, z1, z2})
    if (!std::isfinite(v)) throw ParameterError("non-finite pattern parameter");
}

ModelParams ModelParams::symmetric(double kappa, double sigma, double delta_phi, double theta,
                                   double zbar) {
  ModelParams p;
  p.kappa1 = p.kappa2 = kappa;
  p.theta1 = p.theta2 = theta;
  p.sigma = sigma;
  const double dz = delta_phi / kappa;
  p.z1 = zbar - 0.5 * dz;
  p.z2 = zbar + 0.5 * dz;
  return p;
}

ModelParams ModelParams::from_periods(double kappa, double n_periods, double delta_phi,
                                      double theta, double zbar) {
  return symmetric(kappa, units::kappa_sigma_from_periods(n_periods) / kappa, delta_phi, theta,
                   zbar);
}

void to_json(nlohmann::json& j, const ModelParams& p) {
  j = nlohmann::json{{"kappa1", p.kappa1}, {"kappa2", p.kappa2}, {"theta1", p.theta1},
                     {"theta2", p.theta2}, {"z1", p.z1},         {"z2", p.z2},
                     {"sigma", p.sigma}};
}

void from_json(const nlohmann::json& j, ModelParams& p) {
  p.kappa1 = j.at("kappa1").get<double>();
  p.kappa2 = j.at("kappa2").get<double>();
  p.theta1 = j.value("theta1", 0.0);
  p.theta2 = j.value("theta2", 0.0);
  p.z1 = j.at("z1").get<double>();
  p.z2 = j.at("z2").get<double>();
  p.sigma = j.at("sigma").get<double>();
}

Grid Grid::spanning(double z_min, double z_max, std::size_t n) {
  if (n < 2 || !(z_max > z_min)) throw SamplingError("Grid::spanning needs n >= 2, z_max > z_min");
  return {z_min, (z_max - z_min) / static_cast<double>(n - 1), n};
}

Grid default_grid(const ModelParams& p, std::size_t n) {
  return Grid::spanning(std::min(p.z1, p.z2) - 6.0 * p.sigma, std::max(p.z1, p.z2) + 6.0 * p.sigma,
                        n);
}

void SampledSignal::validate() const {
  if (!(dz > 0.0)) throw SamplingError("signal dz must be > 0");
  if (values.size() < 2) throw SamplingError("signal needs at least 2 samples");
  for (double v : values)
    if (!std::isfinite(v)) throw SamplingError("signal contains non-finite values");
}

void write_csv(std::ostream& os, const SampledSignal& s) {
  os << "# units: z [um], value [dimensionless]\n";
  os << "z,value\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << fmt_double(s.z(i)) << ',' << fmt_double(s.values[i]) << '\n';
}

SampledSignal read_csv(std::istream& is) {
  std::vector<double> z, v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("z,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ','))
      throw ConfigError("bad CSV row: " + line);
    try {
      z.push_back(std::stod(a));
      v.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw ConfigError("bad CSV row: " + line);
    }
  }
  if (z.size() < 2) throw SamplingError("CSV has fewer than 2 rows");
  SampledSignal s;
  s.z0 = z.front();
  s.dz = (z.back() - z.front()) / static_cast<double>(z.size() - 1);
  for (std::size_t i = 1; i < z.size(); ++i)
    if (std::abs((z[i] - z[i - 1]) - s.dz) > 1e-6 * std::abs(s.dz))
      throw SamplingError("CSV grid is not uniform");
  s.values = std::move(v);
  s.validate();
  return s;
}

double pattern_value(const ModelParams& p, double z) {
  const double s1 = std::sin(0.5 * p.kappa1 * (z - p.z1) + p.theta1);
  const double s2 = std::sin(0.5 * p.kappa2 * (z - p.z2) + p.theta2);
  return gauss(z - p.z1, p.sigma) * s1 * s1 + gauss(z - p.z2, p.sigma) * s2 * s2;
}

SampledSignal generate_pattern(const ModelParams& params, const Grid& grid) {
  params.validate();
  check_grid(params, grid);
  SampledSignal s{grid.z0, grid.dz, std::vector<double>(grid.n)};
  for (std::size_t i = 0; i < grid.n; ++i) s.values[i] = pattern_value(params, grid.z(i));
  return s;
}

std::vector<std::complex<double>> positive_frequency_part(const ModelParams& p, const Grid& grid) {
  p.validate();
  require_common_kappa(p, "positive_frequency_part");
  const double k = p.kappa();
  const double phi1 = 2.0 * p.theta1 - k * p.z1;
  const double phi2 = 2.0 * p.theta2 - k * p.z2;
  std::vector<std::complex<double>> out(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double z = grid.z(i);
    out[i] = 0.5 * (std::polar(gauss(z - p.z1, p.sigma), k * z + phi1) +
                    std::polar(gauss(z - p.z2, p.sigma), k * z + phi2));
  }
  return out;
}

double local_phase_gradient(const ModelParams& p, double z) {
  require_common_kappa(p, "local_phase_gradient");
  const double k = p.kappa();
  const double dz = p.delta_z();
  const double D = (2.0 * p.theta1 - k * p.z1) - (2.0 * p.theta2 - k * p.z2);
  const double lnr = (z - p.mean_z()) * dz / (p.sigma * p.sigma);
  const double den = std::cosh(lnr) + std::cos(D);
  return k - dz / (2.0 * p.sigma * p.sigma) * std::sin(D) / den;
}

PhaseProfile local_phase(const ModelParams& p, const Grid& grid) {
  p.validate();
  require_common_kappa(p, "local_phase");
  if (grid.n < 2 || !(grid.dz > 0.0)) throw SamplingError("grid needs n >= 2 and dz > 0");
  const double k = p.kappa();
  const double phi1 = 2.0 * p.theta1 - k * p.z1;
  const double phi2 = 2.0 * p.theta2 - k * p.z2;
  const double D = phi1 - phi2;
  const double dz = p.delta_z();
  const double s2 = p.sigma * p.sigma;

  PhaseProfile out;
  out.z0 = grid.z0;
  out.dz = grid.dz;
  out.phase.assign(grid.n, std::nan(""));
  out.gradient.assign(grid.n, std::nan(""));
  out.valid.assign(grid.n, 0);

  bool have_prev = false;
  double prev = 0.0, prev_z = 0.0;
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double z = grid.z(i);
    const double lnr = (z - p.mean_z()) * dz / s2;
    // |1 + r e^{-iD}|^2 / r = 2 (cosh ln r + cos D)
    const double den = std::cosh(lnr) + std::cos(D);
    if (!(den > 1e-14)) {
      out.singular = true;
      continue;
    }
    // arg(1 + r e^{-iD}) written so it stays finite for large |ln r|
    double bracket;
    if (lnr <= 0.0) {
      const double r = std::exp(lnr);
      bracket = -std::atan2(r * std::sin(D), 1.0 + r * std::cos(D));
    } else {
      const double ir = std::exp(-lnr);
      bracket = -D - std::atan2(-ir * std::sin(D), 1.0 + ir * std::cos(D));
    }
    double ph = k * z + phi1 + bracket;
    if (have_prev) {
      const double expect = prev + k * (z - prev_z);
      ph -= units::kTwoPi * std::round((ph - expect) / units::kTwoPi);
    }
    out.phase[i] = ph;
    out.gradient[i] = k - dz / (2.0 * s2) * std::sin(D) / den;
    out.valid[i] = 1;
    prev = ph;
    prev_z = z;
    have_prev = true;
  }
  return out;
}

}  // namespace moire
