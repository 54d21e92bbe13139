// moire: command-line front end.  Every command reads one JSON config (defaults below), applies
// --set key.path=value overrides, and writes CSV/JSON tables plus manifest.json into --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "moire/errors.hpp"
#include "moire/io.hpp"
#include "moire/parallel.hpp"
#include "moire/pattern.hpp"
#include "moire/pipeline.hpp"
#include "moire/rigidity.hpp"
#include "moire/spectral.hpp"
#include "moire/units.hpp"
#include "moire/version.hpp"
#include "moire/wavepacket.hpp"
#include "moire/wigner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moire;
using units::kPi;

namespace {

struct Run {
  std::string command;
  fs::path out;
  std::string config_path;
  std::uint64_t seed = 1;
  bool seed_given = false;
  unsigned jobs = 1;
  json config;

  template <class Fn>
  void csv(const std::string& name, Fn&& fn) const {
    std::ostringstream os;
    fn(os);
    write_text_file(out / name, os.str());
  }
  void json_file(const std::string& name, const json& j) const { write_json_file(out / name, j); }
};

// ---- defaults -------------------------------------------------------------

json default_generate() {
  const auto p = ModelParams::from_periods(1.0, 5.6, 2.5 * kPi);
  return {{"params", p}, {"grid_points", 4096}};
}

json default_surface() {
  return {{"kappa_min", 1.0}, {"kappa_max", 4.0}, {"n_kappa", 121}, {"dphi_min", 0.0},
          {"dphi_max", 6 * kPi}, {"n_dphi", 181}, {"n_periods", 5.6}, {"kappa_ratio", 1.0},
          {"overlay_kappa0", 0.1}};
}

json default_scan() {
  return {{"trajectory", TrajectoryParams{}}, {"T2_min", 160.0}, {"T2_max", 800.0}, {"n_T2", 641},
          {"aft_map", true}, {"aft_T2_points", 161}, {"aft_K_points", 200}, {"aft_K_max_over_kappa", 2.0}};
}

json default_simulate() { return json(SequenceConfig{}); }

json default_wigner() {
  const double h = units::kHbarOverMassRb87;
  const double omega = units::kTwoPi * 113e-6;
  const double L = std::sqrt(h / omega);
  GaussianWavepacket a, b;
  a.center = -4 * L;
  a.width = L;
  b.center = 4 * L;
  b.width = L;
  b.momentum = 0.5 / L;
  return {{"a", a}, {"b", b}, {"omega", omega}, {"hbar_over_m", h},
          {"omega_tau", {0.25 * kPi, 0.5 * kPi, kPi, 2 * kPi}}, {"n", 256}, {"write_grids", false}};
}

json default_pipeline() { return {{"pipeline", PipelineConfig{}}, {"snr_sweep", json::array()}}; }

json default_jump_heights() {
  std::vector<double> np;
  for (int i = 0; i <= 72; ++i) np.push_back(2.0 + 0.25 * i);
  return {{"n_list", {0, 1, 2, 3, 4, 5, 6, 7, 8}}, {"n_periods", np}};
}

json default_universal() {
  return {{"n_periods", 5.61}, {"dphi_min", 0.05}, {"dphi_max", 18 * kPi}, {"n_dphi", 2000}};
}

// ---- config handling ------------------------------------------------------

void reject_unknown(const json& given, const json& defaults, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key: " + key);
    const auto& d = defaults.at(it.key());
    if (d.is_object() && it->is_object()) reject_unknown(*it, d, key);
  }
}

json resolve_config(const json& defaults, const std::string& path, const std::vector<std::string>& sets) {
  json user = json::object();
  if (!path.empty()) {
    try {
      user = read_json_file(path);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("cannot parse ") + path + ": " + e.what());
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object: " + path);
  }
  for (const auto& s : sets) apply_dotted_override(user, s);
  if (user.contains("schema_version")) {
    if (user.at("schema_version") != kConfigSchemaVersion)
      throw ConfigError("unsupported schema_version (this build reads " + std::to_string(kConfigSchemaVersion) + ")");
    user.erase("schema_version");
  }
  reject_unknown(user, defaults, "");
  json cfg = defaults;
  cfg.merge_patch(user);
  cfg["schema_version"] = kConfigSchemaVersion;
  return cfg;
}

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::atoll(e));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const Run& r) {
  r.json_file("manifest.json", {{"command", r.command},
                                {"config_path", r.config_path},
                                {"seed", r.seed},
                                {"output_directory", r.out.string()},
                                {"tool_version", kVersion},
                                {"timestamp", timestamp()},
                                {"schema_version", kConfigSchemaVersion},
                                {"resolved_config", "config.json"}});
}

// ---- commands -------------------------------------------------------------

void cmd_generate(const Run& r) {
  const auto p = r.config.at("params").get<ModelParams>();
  p.validate();
  const auto g = default_grid(p, r.config.at("grid_points").get<std::size_t>());
  const auto s = generate_pattern(p, g);
  r.csv("pattern.csv", [&](std::ostream& os) { write_csv(os, s); });
  json summary = {{"n_periods", p.n_periods()}, {"delta_z", p.delta_z()}, {"delta_phi", p.delta_phi()},
                  {"kappa", p.kappa()}, {"rows", s.size()}};
  summary["spectrum"] = peak_record(numerical_spectrum(s, p.sigma));
  if (p.equal_kappa()) summary["solve_km"] = solve_km(p);
  r.json_file("summary.json", summary);
}

void cmd_surface(const Run& r) {
  const auto& c = r.config;
  const auto kap = linspace(c.at("kappa_min"), c.at("kappa_max"), c.at("n_kappa"));
  const auto dph = linspace(c.at("dphi_min"), c.at("dphi_max"), c.at("n_dphi"));
  const double np = c.at("n_periods");
  const double ratio = c.at("kappa_ratio");
  const auto map = ratio == 1.0 ? km_surface(kap, dph, np, r.jobs) : km_surface_mixed(kap, dph, np, ratio, r.jobs);
  const double k0 = c.at("overlay_kappa0");
  r.csv("surface.csv", [&](std::ostream& os) {
    write_csv(os, map, [&](double d) { return rigidity_kappa(k0, d, np); });
  });
  std::size_t masked = 0;
  for (auto m : map.masked) masked += m;
  r.json_file("summary.json", {{"cells", map.K_M.size()}, {"masked", masked}, {"n_periods", np}});
}

void cmd_scan_t2(const Run& r) {
  const auto& c = r.config;
  const auto tp = c.at("trajectory").get<TrajectoryParams>();
  const double lo = c.at("T2_min"), hi = c.at("T2_max");
  const auto T2 = linspace(lo, hi, c.at("n_T2"));
  const auto scan = scan_trajectory(tp, T2, r.jobs);
  r.csv("scan.csv", [&](std::ostream& os) { write_csv(os, scan); });
  const auto jumps = find_jumps(scan);
  const auto plats = plateaus(scan, jumps);
  json js = json::array(), ps = json::array(), vm = json::array();
  for (const auto& j : jumps)
    js.push_back({{"T2_lo", j.T2_lo}, {"T2_hi", j.T2_hi}, {"K_before", j.K_before}, {"K_after", j.K_after}});
  for (const auto& p : plats)
    ps.push_back({{"T2_lo", p.T2_lo}, {"T2_hi", p.T2_hi}, {"n_points", p.n_points}, {"K_mean", p.K_mean},
                  {"spread", p.spread()}});
  for (auto i : visibility_minima(scan)) vm.push_back(T2[i]);
  json jt = json::array();
  for (double t : tp.jump_times(lo, hi)) jt.push_back(t);
  std::size_t failed = 0;
  for (auto ok : scan.ok) failed += ok ? 0 : 1;
  r.json_file("summary.json", {{"jumps", js}, {"plateaus", ps}, {"visibility_minima_T2", vm},
                               {"odd_pi_T2", jt}, {"solver_failures", failed}});
  if (c.at("aft_map").get<bool>()) {
    const auto tm = linspace(lo, hi, c.at("aft_T2_points"));
    const std::size_t nk = c.at("aft_K_points");
    const double kmax = c.at("aft_K_max_over_kappa");
    const auto tr = experimental_trajectory(tp, tm);
    std::vector<std::vector<double>> rows(tm.size());
    parallel_for(tm.size(), r.jobs, [&](std::size_t i) {
      const auto p = ModelParams::from_periods(tr.kappa[i], tp.n_periods, tr.dphi[i]);
      for (std::size_t k = 0; k < nk; ++k) {
        const double K = kmax * tr.kappa[i] * static_cast<double>(k) / static_cast<double>(nk - 1);
        rows[i].push_back(K);
        rows[i].push_back(analytic_aft(p, K));
      }
    });
    r.csv("aft_map.csv", [&](std::ostream& os) {
      CsvWriter w(os, "T2 us, K rad/um, aft 1", {"T2", "K", "aft"});
      for (std::size_t i = 0; i < tm.size(); ++i)
        for (std::size_t k = 0; k < nk; ++k) w.row({tm[i], rows[i][2 * k], rows[i][2 * k + 1]});
    });
  }
}

void cmd_simulate(const Run& r) {
  auto cfg = r.config;
  cfg.erase("schema_version");
  const auto sc = cfg.get<SequenceConfig>();
  const auto res = run_sequence(sc);
  r.csv("spin1.csv", [&](std::ostream& os) { write_csv(os, res.spin1); });
  r.csv("spin2.csv", [&](std::ostream& os) { write_csv(os, res.spin2); });
  r.csv("moire.csv", [&](std::ostream& os) { write_csv(os, res.moire); });
  r.csv("conservation.csv", [&](std::ostream& os) { write_csv(os, res.records); });
  r.json_file("summary.json", res.summary());
}

void cmd_wigner(const Run& r) {
  const auto& c = r.config;
  const auto a = c.at("a").get<GaussianWavepacket>();
  const auto b = c.at("b").get<GaussianWavepacket>();
  const double omega = c.at("omega"), h = c.at("hbar_over_m");
  const std::size_t n = c.at("n");
  json reports = json::array();
  std::vector<RotationReport> rs;
  for (double wt : c.at("omega_tau").get<std::vector<double>>()) {
    rs.push_back(verify_rotation_theorem(a, b, omega, wt / omega, h, n, r.jobs));
    reports.push_back(rs.back());
  }
  r.json_file("report.json", reports);
  r.csv("rotation.csv", [&](std::ostream& os) {
    CsvWriter w(os, "omega_tau rad, errors and counts 1",
                {"omega_tau", "l2_error", "linf_error", "norm_after", "count_before", "count_after",
                 "count_rel_change", "phase_change"});
    for (const auto& x : rs)
      w.row({x.omega * x.tau, x.l2_error, x.linf_error, x.norm_after, x.before.count, x.after.count,
             x.count_rel_change, x.phase_change});
  });
  if (c.at("write_grids").get<bool>()) {
    const auto g = auto_wigner_grid(a, b, n);
    write_binary(r.out / "wigner.bin", wigner_of_superposition(a, b, g, r.jobs));
  }
}

void cmd_pipeline(const Run& r) {
  auto pc = r.config.at("pipeline").get<PipelineConfig>();
  if (r.seed_given) pc.seed = r.seed;
  pc.jobs = r.jobs;
  const auto res = run_pipeline(pc);
  r.csv("points.csv", [&](std::ostream& os) { write_csv(os, res); });
  auto summary = res.summary();
  summary["seed"] = pc.seed;
  summary["snr"] = pc.ccd.snr;
  const auto sweep = r.config.at("snr_sweep").get<std::vector<double>>();
  if (!sweep.empty()) {
    std::vector<PipelineResult> sw;
    for (double snr : sweep) {
      auto c = pc;
      c.ccd.snr = snr;
      sw.push_back(run_pipeline(c));
    }
    r.csv("snr_sweep.csv", [&](std::ostream& os) {
      CsvWriter w(os, "snr 1, errors 1", {"snr", "kappa_max_rel_error", "dphi_max_rel_error", "v_max_rel_error",
                                          "a_rel_error", "phi0_rel_error", "secondary_checked",
                                          "secondary_mismatches"});
      for (std::size_t i = 0; i < sw.size(); ++i)
        w.row({sweep[i], sw[i].kappa_max_rel_error, sw[i].dphi_max_rel_error, sw[i].v_max_rel_error,
               sw[i].a_rel_error, sw[i].phi0_rel_error, double(sw[i].secondary_checked),
               double(sw[i].secondary_mismatches)});
    });
  }
  r.json_file("summary.json", summary);
}

void cmd_jump_heights(const Run& r) {
  const auto c = jump_vs_periods(r.config.at("n_list").get<std::vector<int>>(),
                                 r.config.at("n_periods").get<std::vector<double>>());
  r.csv("jump_heights.csv", [&](std::ostream& os) { write_csv(os, c); });
}

void cmd_universal(const Run& r) {
  const auto& c = r.config;
  const auto u = universal_curve(c.at("n_periods"), linspace(c.at("dphi_min"), c.at("dphi_max"), c.at("n_dphi")));
  r.csv("universal.csv", [&](std::ostream& os) { write_csv(os, u); });
}

struct Command {
  std::string name, help;
  json (*defaults)();
  void (*run)(const Run&);
};

const std::vector<Command>& commands() {
  static const std::vector<Command> c = {
      {"generate", "Sample a two-constituent pattern", default_generate, cmd_generate},
      {"surface", "K_M over a (kappa, dphi) grid", default_surface, cmd_surface},
      {"scan-t2", "K_M and visibility along the T2 trajectory", default_scan, cmd_scan_t2},
      {"simulate", "Wavepacket sequence simulation", default_simulate, cmd_simulate},
      {"wigner", "Phase-space rotation check for a packet pair", default_wigner, cmd_wigner},
      {"pipeline", "Synthetic CCD images analysed end to end", default_pipeline, cmd_pipeline},
      {"jump-heights", "Jump height versus number of periods", default_jump_heights, cmd_jump_heights},
      {"universal", "K_M dz versus dphi at fixed N_p", default_universal, cmd_universal},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moire: finite-size moire pattern tools"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  struct Opts {
    std::string config, out;
    std::uint64_t seed = 1;
    unsigned jobs = 0;
    std::vector<std::string> sets;
    bool print_defaults = false;
  };
  std::map<std::string, Opts> opts;
  for (const auto& c : commands()) {
    auto* sub = app.add_subcommand(c.name, c.help);
    auto& o = opts[c.name];
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (default out/<command>)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--jobs", o.jobs, "worker threads (default: all cores)");
    sub->add_option("--set", o.sets, "override a config field, key.path=value")->take_all();
    sub->add_flag("--print-defaults", o.print_defaults, "print the default config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& c : commands()) {
    auto* sub = app.get_subcommand(c.name);
    if (!sub->parsed()) continue;
    const auto& o = opts[c.name];
    try {
      if (o.print_defaults) {
        auto d = c.defaults();
        d["schema_version"] = kConfigSchemaVersion;
        std::cout << d.dump(2) << "\n";
        return 0;
      }
      Run r;
      r.command = c.name;
      r.config_path = o.config;
      r.seed = o.seed;
      r.seed_given = sub->count("--seed") > 0;
      r.jobs = o.jobs ? o.jobs : default_jobs();
      r.out = o.out.empty() ? fs::path("out") / c.name : fs::path(o.out);
      r.config = resolve_config(c.defaults(), o.config, o.sets);
      fs::create_directories(r.out);
      r.json_file("config.json", r.config);
      write_manifest(r);
      c.run(r);
      std::cout << c.name << ": wrote " << r.out.string() << "\n";
      return 0;
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const NumericalError& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return 3;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}
