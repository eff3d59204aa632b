#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lattice_laws/al.hpp"
#include "lattice_laws/errors.hpp"
#include "lattice_laws/experiment.hpp"
#include "lattice_laws/flow.hpp"
#include "lattice_laws/toda.hpp"

namespace py = pybind11;
using namespace lattice_laws;
using Complex = std::complex<double>;

namespace {

template <class T>
py::dict series_dict(const SiteSeries<T>& s) {
  py::dict d;
  d["first"] = s.window.first;
  d["values"] = s.values;
  return d;
}

toda::LaxSign lax_sign(int s) { return s > 0 ? toda::LaxSign::plus : toda::LaxSign::minus; }
al::ALSign al_sign(int s) { return s > 0 ? al::ALSign::defocusing : al::ALSign::focusing; }

toda::TodaState make_toda(int first, std::vector<double> a, std::vector<double> b) {
  toda::TodaState s{{first, static_cast<int>(a.size())}, std::move(a), std::move(b)};
  s.validate();
  return s;
}

al::ALState make_al(int first, std::vector<Complex> alpha, int sign) {
  al::ALState s{{first, static_cast<int>(alpha.size())}, std::move(alpha), al_sign(sign)};
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Toda and Ablowitz-Ladik lattices: Green's functions, conserved densities and flows";

  py::register_exception<LatticeError>(m, "LatticeError", PyExc_RuntimeError);
  py::register_exception<OutOfBall>(m, "OutOfBall", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<LatticeWindow>(m, "LatticeWindow")
      .def(py::init<int, int>(), py::arg("first"), py::arg("size"))
      .def_readonly("first", &LatticeWindow::first)
      .def_readonly("size", &LatticeWindow::size)
      .def("__repr__", [](const LatticeWindow& w) {
        return "LatticeWindow(first=" + std::to_string(w.first) + ", size=" + std::to_string(w.size) + ")";
      });

  py::class_<toda::TodaState>(m, "TodaState")
      .def(py::init(&make_toda), py::arg("first"), py::arg("a"), py::arg("b"))
      .def_static("vacuum", [](int first, int size) { return toda::TodaState::vacuum({first, size}); })
      .def_readonly("window", &toda::TodaState::window)
      .def_readonly("a", &toda::TodaState::a)
      .def_readonly("b", &toda::TodaState::b);

  py::class_<al::ALState>(m, "ALState")
      .def(py::init(&make_al), py::arg("first"), py::arg("alpha"), py::arg("sign") = 1)
      .def_readonly("window", &al::ALState::window)
      .def_readonly("alpha", &al::ALState::alpha)
      .def_property_readonly("sign", [](const al::ALState& s) { return static_cast<int>(s.sign); });

  // Toda
  m.def("toda_energy", &toda::energy);
  m.def("toda_casimirs", [](const toda::TodaState& s) {
    const auto c = toda::casimirs(s);
    return py::make_tuple(c.M, c.P);
  });
  m.def("toda_in_ball", [](const toda::TodaState& s, double kappa, double delta) {
    return toda::in_ball(s, toda::Kappa(kappa), delta);
  }, py::arg("state"), py::arg("kappa"), py::arg("delta") = toda::kDefaultDelta);
  m.def("toda_vector_field", [](const toda::TodaState& s) {
    const auto r = toda::toda_vector_field(s);
    return py::make_tuple(series_dict(r.da_dt), series_dict(r.db_dt));
  });
  m.def("toda_free_green", &toda::free_green, py::arg("n"), py::arg("m"), py::arg("kappa"));
  m.def("toda_green_table", [](const toda::TodaState& s, double kappa, int sign) {
    const auto g = toda::green_table(s, toda::Kappa(kappa), lax_sign(sign));
    return py::make_tuple(g.window().first, g.kernel().values);
  }, py::arg("state"), py::arg("kappa"), py::arg("sign") = 1);
  m.def("toda_density_report", [](const toda::TodaState& s, double kappa, int sign) {
    const auto r = toda::density_report(s, toda::Kappa(kappa), lax_sign(sign));
    py::dict d;
    d["rho"] = series_dict(r.rho);
    d["gamma"] = series_dict(r.gamma);
    d["rho_current"] = series_dict(r.rho_current);
    d["gamma_current"] = series_dict(r.gamma_current);
    d["residuals"] = r.residuals;
    d["sum_rho"] = r.macroscopic.sum_rho;
    d["sum_gamma"] = r.macroscopic.sum_gamma;
    d["log_det"] = r.macroscopic.log_det;
    d["trace_diff"] = r.macroscopic.trace_diff;
    return d;
  }, py::arg("state"), py::arg("kappa"), py::arg("sign") = 1);

  // Ablowitz-Ladik
  m.def("al_vector_field", [](const al::ALState& s) { return series_dict(al::al_vector_field(s)); });
  m.def("al_mass_energy", [](const al::ALState& s) {
    const auto me = al::mass_and_energy(s);
    return py::make_tuple(me.M, me.H);
  });
  m.def("al_free_green", [](int n, int mm, Complex z) { return Eigen::Matrix2cd(al::free_green(n, mm, z)); });
  m.def("al_density_report", [](const al::ALState& s, Complex z, bool allow_unsupported) {
    const auto r = al::density_report(s, al::SpectralZ(z, allow_unsupported));
    py::dict d;
    d["rho"] = series_dict(r.rho);
    d["gamma"] = series_dict(r.gamma);
    d["j"] = series_dict(r.j);
    d["gamma_j"] = series_dict(r.gamma_j);
    d["residuals"] = r.residuals;
    d["sum_rho"] = r.macroscopic.sum_rho;
    d["log_det"] = r.macroscopic.log_det;
    d["sum_gamma"] = r.macroscopic.sum_gamma;
    d["weighted_trace"] = r.macroscopic.weighted_trace;
    return d;
  }, py::arg("state"), py::arg("z"), py::arg("allow_unsupported") = false);
  m.def("al_coercivity", [](std::vector<Complex> direction, double z, int sign, double eps) {
    const auto c = al::coercivity_check({0, static_cast<int>(direction.size())}, direction, z, al_sign(sign), eps);
    py::dict d;
    d["sum_im_j2"] = c.sum_im_j2;
    d["dft_im"] = c.dft_im;
    d["sum_re_rho2"] = c.sum_re_rho2;
    d["dft_re"] = c.dft_re;
    return d;
  }, py::arg("direction"), py::arg("z"), py::arg("sign") = 1, py::arg("eps") = 1e-3);

  // Flows: return (times, final state, drift table at one spectral parameter).
  m.def("toda_evolve", [](const toda::TodaState& s, double T, double tol, double kappa, int sign) {
    flow::IntegrateOptions o;
    o.tol = tol;
    o.grow_margin = toda::pad_width(toda::Kappa(kappa));
    flow::Trajectory<toda::TodaState> traj;
    flow::DriftTable drift;
    {
      py::gil_scoped_release release;
      traj = flow::integrate<flow::TodaModel>(s, T, o);
      drift = flow::conservation_monitor(traj, toda::Kappa(kappa), lax_sign(sign));
    }
    return py::make_tuple(traj.times, traj.states.back(), drift.drift);
  }, py::arg("state"), py::arg("T"), py::arg("tol") = 1e-10, py::arg("kappa") = 1.0, py::arg("sign") = 1);
  m.def("al_evolve", [](const al::ALState& s, double T, double tol, Complex z) {
    const al::SpectralZ sz(z);
    flow::IntegrateOptions o;
    o.tol = tol;
    o.grow_margin = al::pad_width(sz);
    flow::Trajectory<al::ALState> traj;
    flow::DriftTable drift;
    {
      py::gil_scoped_release release;
      traj = flow::integrate<flow::ALModel>(s, T, o);
      drift = flow::conservation_monitor(traj, sz);
    }
    return py::make_tuple(traj.times, traj.states.back(), drift.drift);
  }, py::arg("state"), py::arg("T"), py::arg("tol") = 1e-10, py::arg("z") = Complex(2.0, 0.0));

  // Experiment harness: options as the CLI's key/value pairs.
  m.def("run_experiment", [](const std::map<std::string, std::string>& options) {
    experiment::ExperimentConfig c;
    for (const auto& [k, v] : options) experiment::set_option(c, k, v, "option");
    experiment::Report report;
    {
      py::gil_scoped_release release;
      report = experiment::run(c);
      experiment::write_outputs(report, c);
    }
    py::list checks;
    for (const auto& r : report.checks) {
      py::dict d;
      d["name"] = r.name;
      d["max_residual"] = r.max_residual;
      d["tolerance"] = r.tolerance;
      d["pass"] = r.pass;
      checks.append(d);
    }
    py::dict out;
    out["checks"] = checks;
    out["notes"] = report.notes;
    out["pass"] = report.all_pass();
    out["json"] = experiment::report_json(report, c, false);
    return out;
  });

  m.attr("__version__") = experiment::version();
}
