#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "moire/errors.hpp"
#include "moire/fitting.hpp"
#include "moire/pattern.hpp"
#include "moire/pipeline.hpp"
#include "moire/rigidity.hpp"
#include "moire/spectral.hpp"
#include "moire/units.hpp"
#include "moire/version.hpp"
#include "moire/wavepacket.hpp"
#include "moire/wigner.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace moire;

namespace {

// dicts cross the boundary as JSON text
json to_json_value(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<double> arr(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

SampledSignal signal_of(double z0, double dz, const std::vector<double>& values) {
  SampledSignal s{z0, dz, values};
  s.validate();
  return s;
}

py::dict signal_dict(const SampledSignal& s) {
  std::vector<double> z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) z[i] = s.z(i);
  py::dict d;
  d["z"] = arr(z);
  d["values"] = arr(s.values);
  d["z0"] = s.z0;
  d["dz"] = s.dz;
  return d;
}

}  // namespace

PYBIND11_MODULE(_moire, m) {
  m.doc() = "Finite-size moire patterns: spectra, rigidity, wavepacket and phase-space tools";
  m.attr("__version__") = kVersion;

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const json::exception& e) {
      py::set_error(config_error, e.what());
    }
  });

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<>())
      .def(py::init([](double kappa1, double kappa2, double theta1, double theta2, double z1, double z2,
                       double sigma) { return ModelParams{kappa1, kappa2, theta1, theta2, z1, z2, sigma}; }),
           py::arg("kappa1"), py::arg("kappa2"), py::arg("theta1") = 0.0, py::arg("theta2") = 0.0,
           py::arg("z1") = 0.0, py::arg("z2") = 0.0, py::arg("sigma") = 1.0)
      .def_readwrite("kappa1", &ModelParams::kappa1)
      .def_readwrite("kappa2", &ModelParams::kappa2)
      .def_readwrite("theta1", &ModelParams::theta1)
      .def_readwrite("theta2", &ModelParams::theta2)
      .def_readwrite("z1", &ModelParams::z1)
      .def_readwrite("z2", &ModelParams::z2)
      .def_readwrite("sigma", &ModelParams::sigma)
      .def_property_readonly("kappa", &ModelParams::kappa)
      .def_property_readonly("delta_z", &ModelParams::delta_z)
      .def_property_readonly("delta_phi", &ModelParams::delta_phi)
      .def_property_readonly("n_periods", &ModelParams::n_periods)
      .def("validate", &ModelParams::validate)
      .def_static("symmetric", &ModelParams::symmetric, py::arg("kappa"), py::arg("sigma"), py::arg("delta_phi"),
                  py::arg("theta") = 0.0, py::arg("zbar") = 0.0)
      .def_static("from_periods", &ModelParams::from_periods, py::arg("kappa"), py::arg("n_periods"),
                  py::arg("delta_phi"), py::arg("theta") = 0.0, py::arg("zbar") = 0.0)
      .def("to_dict", [](const ModelParams& p) { return to_py(json(p)); })
      .def("__repr__", [](const ModelParams& p) { return "ModelParams(" + json(p).dump() + ")"; });

  m.def(
      "generate_pattern",
      [](const ModelParams& p, std::size_t n) { return signal_dict(generate_pattern(p, default_grid(p, n))); },
      py::arg("params"), py::arg("n") = 4096, "Samples the pattern on the default grid; dict with z, values.");
  m.def("pattern_value", &pattern_value, py::arg("params"), py::arg("z"));
  m.def("analytic_aft", &analytic_aft, py::arg("params"), py::arg("K"));
  m.def("aft_fixed_dz", &aft_fixed_dz, py::arg("n_periods"), py::arg("delta_phi"), py::arg("delta_theta"),
        py::arg("k_dz"));
  m.def(
      "solve_km", [](const ModelParams& p) { return to_py(json(solve_km(p))); }, py::arg("params"));
  m.def("solve_km_fixed_dz", &solve_km_fixed_dz, py::arg("n_periods"), py::arg("delta_phi"),
        py::arg("delta_theta") = 0.0);
  m.def("jump_height", &jump_height, py::arg("n"), py::arg("kappa"), py::arg("sigma"));
  m.def(
      "numerical_spectrum",
      [](double z0, double dz, const std::vector<double>& values, double sigma) {
        const auto r = numerical_spectrum(signal_of(z0, dz, values), sigma);
        py::dict d = to_py(peak_record(r));
        d["k_grid"] = arr(r.k_grid);
        d["aft"] = arr(r.aft);
        return d;
      },
      py::arg("z0"), py::arg("dz"), py::arg("values"), py::arg("envelope_sigma"));
  m.def(
      "fit_envelope",
      [](double z0, double dz, const std::vector<double>& values) {
        return to_py(json(fit_envelope(signal_of(z0, dz, values))));
      },
      py::arg("z0"), py::arg("dz"), py::arg("values"));
  m.def(
      "fit_fringes",
      [](double z0, double dz, const std::vector<double>& values, double K_M) {
        return to_py(json(fit_fringes(signal_of(z0, dz, values), K_M)));
      },
      py::arg("z0"), py::arg("dz"), py::arg("values"), py::arg("K_M"));
  m.def(
      "fit_visibility_curve",
      [](const std::vector<double>& T2, const std::vector<double>& v) {
        return to_py(json(fit_visibility_curve(T2, v)));
      },
      py::arg("T2"), py::arg("v"));
  m.def(
      "fit_kappa_curve",
      [](const std::vector<double>& T2, const std::vector<double>& k) { return to_py(json(fit_kappa_curve(T2, k))); },
      py::arg("T2"), py::arg("kappa"));

  m.def(
      "scan_trajectory",
      [](const std::vector<double>& T2, const py::object& params, unsigned jobs) {
        const auto tp = to_json_value(params).get<TrajectoryParams>();
        const auto s = scan_trajectory(tp, T2, jobs);
        py::dict d;
        d["T2"] = arr(s.trajectory.T2);
        d["kappa"] = arr(s.trajectory.kappa);
        d["dphi"] = arr(s.trajectory.dphi);
        d["K_M"] = arr(s.K_M);
        d["K_secondary"] = arr(s.K_secondary);
        d["visibility"] = arr(s.visibility);
        py::list jumps;
        for (const auto& j : find_jumps(s)) jumps.append(py::make_tuple(j.T2_lo, j.T2_hi));
        d["jumps"] = jumps;
        return d;
      },
      py::arg("T2"), py::arg("params") = py::none(), py::arg("jobs") = 1);
  m.def(
      "universal_curve",
      [](double np, const std::vector<double>& dphi) {
        const auto u = universal_curve(np, dphi);
        py::dict d;
        d["dphi"] = arr(u.dphi);
        d["k_dz"] = arr(u.k_dz);
        return d;
      },
      py::arg("n_periods"), py::arg("dphi"));
  m.def("rigidity_kappa", &rigidity_kappa, py::arg("kappa0"), py::arg("dphi"), py::arg("n_periods"));

  m.def(
      "run_sequence",
      [](const py::object& config) {
        const auto r = run_sequence(to_json_value(config).get<SequenceConfig>());
        py::dict d = to_py(r.summary());
        d["spin1"] = signal_dict(r.spin1);
        d["spin2"] = signal_dict(r.spin2);
        d["moire"] = signal_dict(r.moire);
        return d;
      },
      py::arg("config") = py::none(), "Runs the pulse sequence; config keys as in the simulate command.");
  m.def(
      "verify_rotation_theorem",
      [](const py::object& a, const py::object& b, double omega, double tau, double h, std::size_t n) {
        return to_py(json(verify_rotation_theorem(to_json_value(a).get<GaussianWavepacket>(),
                                                  to_json_value(b).get<GaussianWavepacket>(), omega, tau, h, n)));
      },
      py::arg("a"), py::arg("b"), py::arg("omega"), py::arg("tau"), py::arg("hbar_over_m") = units::kHbarOverMassRb87,
      py::arg("n") = 512);
  m.def(
      "run_pipeline",
      [](const py::object& config, unsigned jobs) {
        auto c = to_json_value(config).get<PipelineConfig>();
        c.jobs = jobs;
        return to_py(run_pipeline(c).summary());
      },
      py::arg("config") = py::none(), py::arg("jobs") = 1);

  m.attr("HBAR_OVER_M_RB87") = units::kHbarOverMassRb87;
}
