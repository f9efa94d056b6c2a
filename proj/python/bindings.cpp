#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hflab/dynamics.hpp"
#include "hflab/errors.hpp"
#include "hflab/harness.hpp"
#include "hflab/inequality.hpp"
#include "hflab/interaction.hpp"
#include "hflab/observables.hpp"
#include "hflab/state.hpp"

namespace py = pybind11;
using namespace hflab;

namespace {

// The library shares grids as shared_ptr<const TorusGrid>; Python holds them through this handle.
struct Grid {
  GridPtr ptr;
};

using ComplexArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

ComplexArray to_array(const ScalarField& f) {
  const auto n = static_cast<py::ssize_t>(f.grid().points_per_axis());
  ComplexArray out({n, n, n});
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

ScalarField to_field(const Grid& g, const ComplexArray& a) {
  if (a.size() != static_cast<py::ssize_t>(g.ptr->size())) {
    throw InvalidArgument("array size does not match the grid");
  }
  ScalarField f(g.ptr);
  std::copy(a.data(), a.data() + a.size(), f.values().begin());
  return f;
}

py::dict report_dict(const IneqReport& r) {
  py::dict d;
  d["id"] = r.id;
  d["params"] = r.params;
  d["lhs"] = r.lhs;
  d["rhs_core"] = r.rhs_core;
  d["ratio"] = r.ratio;
  d["hbar"] = r.hbar;
  return d;
}

py::object optional_value(const std::optional<double>& v) {
  return v ? py::cast(*v) : py::none();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Low-rank Hartree and Hartree-Fock dynamics on a periodic box.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<OrthonormalityError>(m, "OrthonormalityError", PyExc_ValueError);
  py::register_exception<DriftAlarm>(m, "DriftAlarm", PyExc_RuntimeError);
  py::register_exception<LocalizationError>(m, "LocalizationError", PyExc_RuntimeError);
  py::register_exception<ConsistencyError>(m, "ConsistencyError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<Grid>(m, "TorusGrid")
      .def(py::init([](int n, double length) { return Grid{TorusGrid::create(n, length)}; }),
           py::arg("points_per_axis"), py::arg("box_length"))
      .def_property_readonly("points_per_axis", [](const Grid& g) { return g.ptr->points_per_axis(); })
      .def_property_readonly("box_length", [](const Grid& g) { return g.ptr->box_length(); })
      .def_property_readonly("spacing", [](const Grid& g) { return g.ptr->spacing(); })
      .def("coordinates", [](const Grid& g) {
        std::vector<double> c(g.ptr->points_per_axis());
        for (int j = 0; j < g.ptr->points_per_axis(); ++j) c[j] = g.ptr->coordinate(j);
        return c;
      });

  py::enum_<Mode>(m, "Mode").value("hartree", Mode::hartree).value("hartree_fock", Mode::hartree_fock);

  py::class_<PhaseSpaceCenter>(m, "PhaseSpaceCenter")
      .def(py::init([](std::array<double, 3> x, std::array<double, 3> v) { return PhaseSpaceCenter{x, v}; }),
           py::arg("position"), py::arg("velocity") = std::array<double, 3>{0, 0, 0})
      .def_readwrite("position", &PhaseSpaceCenter::position)
      .def_readwrite("velocity", &PhaseSpaceCenter::velocity);

  py::class_<MixedState>(m, "MixedState")
      .def_property_readonly("hbar", &MixedState::hbar)
      .def_property_readonly("rank", &MixedState::rank)
      .def_property_readonly("weights", &MixedState::weights)
      .def_property_readonly("grid", [](const MixedState& s) { return Grid{s.grid_ptr()}; })
      .def("orbital", [](const MixedState& s, int j) { return to_array(s.orbital(j)); }, py::arg("j"))
      .def("normalized_trace", &MixedState::normalized_trace)
      .def("orthonormality_error", &MixedState::orthonormality_error)
      .def("operator_norm", &MixedState::operator_norm);

  m.def(
      "new_mixed_state",
      [](double hbar, const Grid& g, std::vector<double> weights, const std::vector<ComplexArray>& orbitals) {
        std::vector<ScalarField> fields;
        for (const auto& a : orbitals) fields.push_back(to_field(g, a));
        return new_mixed_state(hbar, g.ptr, std::move(weights), std::move(fields));
      },
      py::arg("hbar"), py::arg("grid"), py::arg("weights"), py::arg("orbitals"));
  m.def(
      "random_mixed_state",
      [](std::uint64_t seed, double hbar, const Grid& g, int rank, double decay) {
        return random_mixed_state(seed, hbar, g.ptr, rank, decay);
      },
      py::arg("seed"), py::arg("hbar"), py::arg("grid"), py::arg("rank"), py::arg("decay"));
  m.def(
      "coherent_state_lattice",
      [](double hbar, const Grid& g, const std::vector<PhaseSpaceCenter>& centers, std::optional<double> sigma) {
        return coherent_state_lattice(hbar, g.ptr, centers, sigma.value_or(default_coherent_width(hbar, *g.ptr)));
      },
      py::arg("hbar"), py::arg("grid"), py::arg("centers"), py::arg("sigma") = py::none());
  m.def(
      "plane_wave_state",
      [](double hbar, const Grid& g, const std::vector<std::array<int, 3>>& modes, std::vector<double> weights) {
        return plane_wave_state(hbar, g.ptr, modes, std::move(weights));
      },
      py::arg("hbar"), py::arg("grid"), py::arg("modes"), py::arg("weights"));
  m.def("spatial_density", [](const MixedState& s) { return to_array(spatial_density(s)); });
  m.def("write_snapshot", &write_snapshot, py::arg("state"), py::arg("path"));
  m.def("read_snapshot", &read_snapshot, py::arg("path"));

  m.def("riesz_constant", &riesz_constant, py::arg("a"));
  py::class_<InteractionKernel>(m, "InteractionKernel")
      .def(py::init([](const Grid& g, double a, int sign, bool dealias) { return InteractionKernel(g.ptr, a, sign, dealias); }),
           py::arg("grid"), py::arg("a"), py::arg("sign"), py::arg("dealias") = false)
      .def_property_readonly("exponent", &InteractionKernel::exponent)
      .def_property_readonly("sign", &InteractionKernel::sign);
  m.def("mean_field", [](const InteractionKernel& k, const MixedState& s) {
    return to_array(mean_field(k, spatial_density(s)));
  });
  m.def("exchange_hs_norm", &exchange_hs_norm);

  py::class_<PropagatorConfig>(m, "PropagatorConfig")
      .def(py::init([](Mode mode, double dt, int iterations, std::optional<double> coefficient) {
             PropagatorConfig c;
             c.mode = mode;
             c.dt = dt;
             c.corrector_iterations = iterations;
             c.exchange_coefficient = coefficient;
             return c;
           }),
           py::arg("mode") = Mode::hartree_fock, py::arg("dt") = 1e-3, py::arg("corrector_iterations") = 1,
           py::arg("exchange_coefficient") = py::none())
      .def_readwrite("mode", &PropagatorConfig::mode)
      .def_readwrite("dt", &PropagatorConfig::dt)
      .def_readwrite("corrector_iterations", &PropagatorConfig::corrector_iterations);

  m.def("strang_step", [](const InteractionKernel& k, const MixedState& s, const PropagatorConfig& c) {
    return strang_step(k, s, c);
  });
  m.def(
      "evolve",
      [](const InteractionKernel& k, const MixedState& s, double T, const PropagatorConfig& c, int cadence,
         const std::optional<std::function<void(double, const MixedState&)>>& observer) {
        Observer obs;
        if (observer) obs = [&](int, double t, const MixedState& st) { (*observer)(t, st); };
        return evolve(k, s, T, c, cadence, obs).state;
      },
      py::arg("kernel"), py::arg("state"), py::arg("final_time"), py::arg("config"), py::arg("cadence") = 1,
      py::arg("observer") = py::none());
  m.def(
      "hf_energy",
      [](const InteractionKernel& k, const MixedState& s, Mode mode) { return hf_energy(k, s, mode); },
      py::arg("kernel"), py::arg("state"), py::arg("mode") = Mode::hartree_fock);
  m.def("frobenius_distance", &frobenius_distance);

  m.def("moment", &moment, py::arg("state"), py::arg("n"));
  m.def("schatten_lp", &schatten_lp, py::arg("state"), py::arg("p"));
  m.def(
      "weighted_schatten", [](const MixedState& s, int n, double p) { return weighted_schatten(s, n, p); },
      py::arg("state"), py::arg("n"), py::arg("p"));
  m.def(
      "sobolev_norm",
      [](const MixedState& s, int n, double q, bool check_localization) {
        SobolevOptions o;
        o.check_localization = check_localization;
        return sobolev_norm(s, n, q, o).total();
      },
      py::arg("state"), py::arg("n"), py::arg("q"), py::arg("check_localization") = true);
  m.def("lp_pm_eps", &lp_pm_eps, py::arg("state"), py::arg("s"), py::arg("r"), py::arg("eps"));

  m.def(
      "exponents",
      [](double a, int n, int k, double p) {
        const auto e = exponents(a, n, k, p);
        py::dict d;
        d["b"] = e.b;
        d["r"] = e.r;
        d["p_nk"] = e.p_nk;
        d["p_nk_conj"] = e.p_nk_conj;
        d["theta_2"] = optional_value(e.theta_2);
        d["theta_n"] = optional_value(e.theta_n);
        d["big_theta_2"] = optional_value(e.big_theta_2);
        d["big_theta_n"] = optional_value(e.big_theta_n);
        d["a_n"] = e.a_n;
        d["n_a"] = e.n_a;
        d["q_star"] = e.q_star;
        d["theta"] = e.theta;
        return d;
      },
      py::arg("a"), py::arg("n"), py::arg("k") = 0, py::arg("p") = 1.0);
  m.def("check_kinetic_interpolation", [](const MixedState& s, int n, int k) {
    return report_dict(check_kinetic_interpolation(s, n, k));
  });
  m.def(
      "commutator_trace_X",
      [](const InteractionKernel& k, const MixedState& s, int n, int axis, double tolerance) {
        const auto c = commutator_trace_X(k, s, n, axis, tolerance);
        return py::make_tuple(c.direct, c.leibniz, report_dict(c.report));
      },
      py::arg("kernel"), py::arg("state"), py::arg("n"), py::arg("axis"), py::arg("tolerance") = 1e-8);
  m.def(
      "gronwall_envelope",
      [](const std::vector<double>& coefficient, double dt, double exponent, double y0) {
        return gronwall_envelope(coefficient, dt, exponent, y0);
      },
      py::arg("coefficient"), py::arg("dt"), py::arg("exponent"),
        py::arg("y0"));

  m.def(
      "run_command",
      [](const std::string& command, const std::filesystem::path& config, const std::filesystem::path& out,
         int threads, std::optional<std::uint64_t> seed) {
        CommandOptions o;
        o.out = out;
        o.threads = threads;
        o.seed = seed;
        py::gil_scoped_release release;
        return run_command(command, config, o);
      },
      py::arg("command"), py::arg("config"), py::arg("out"), py::arg("threads") = 1, py::arg("seed") = py::none());
  m.attr("__version__") = version_string();
}
