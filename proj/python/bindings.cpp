#include <optional>
#include <random>
#include <string>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hbdm/equivariance.hpp"
#include "hbdm/error.hpp"
#include "hbdm/geometry.hpp"
#include "hbdm/guidance.hpp"
#include "hbdm/integrator.hpp"
#include "hbdm/scenario.hpp"
#include "hbdm/slater.hpp"
#include "hbdm/wavefunction.hpp"

namespace py = pybind11;
using namespace hbdm;

namespace {

std::vector<Side> parse_sides(const std::optional<std::vector<std::string>>& names, std::size_t n) {
  if (!names) return smooth_sides(n);
  std::vector<Side> out;
  for (const auto& s : *names) {
    if (s == "left") out.push_back(Side::Left);
    else if (s == "right") out.push_back(Side::Right);
    else if (s == "smooth") out.push_back(Side::Smooth);
    else throw py::value_error("side must be 'left', 'right' or 'smooth', got '" + s + "'");
  }
  return out;
}

Side parse_side(const std::string& s) { return parse_sides(std::vector<std::string>{s}, 1).front(); }

py::dict crossing_dict(const KinkCrossing& e) {
  py::dict d;
  d["s"] = e.s;
  d["slot"] = e.slot;
  d["kink"] = e.kink;
  d["side_from"] = std::string(to_string(e.side_from));
  d["side_to"] = std::string(to_string(e.side_to));
  d["q"] = e.q;
  d["chart_velocity_before"] = e.chart_velocity_before;
  d["chart_velocity_after"] = e.chart_velocity_after;
  d["spacetime_velocity_before"] = e.spacetime_velocity_before;
  d["spacetime_velocity_after"] = e.spacetime_velocity_after;
  d["flux_left"] = e.flux_left;
  d["flux_right"] = e.flux_right;
  d["flux_mismatch"] = e.flux_mismatch;
  d["sign_rule_ok"] = e.sign_rule_ok;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hbdm, m) {
  m.doc() = "Multi-time guidance on kinked foliations";
  m.attr("__version__") = HBDM_VERSION;

  // Leaked on purpose: the translator outlives module teardown.
  static PyObject* error_type = PyErr_NewException("hbdm._hbdm.HbdmError", PyExc_RuntimeError, nullptr);
  m.attr("HbdmError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = static_cast<int>(e.code());
      exc.attr("kind") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  // --- geometry ---

  py::class_<MinkowskiPoint>(m, "MinkowskiPoint")
      .def(py::init([](double t, std::vector<double> x) {
             if (x.empty() || x.size() > 3) throw py::value_error("x must have 1 to 3 components");
             MinkowskiPoint p;
             p.t = t;
             p.dim = static_cast<int>(x.size());
             for (std::size_t i = 0; i < x.size(); ++i) p.x[i] = x[i];
             return p;
           }),
           py::arg("t"), py::arg("x"))
      .def_readwrite("t", &MinkowskiPoint::t)
      .def_property_readonly("x", [](const MinkowskiPoint& p) {
        return std::vector<double>(p.x.begin(), p.x.begin() + p.dim);
      })
      .def_readonly("dim", &MinkowskiPoint::dim)
      .def("__repr__", [](const MinkowskiPoint& p) {
        std::string s = "MinkowskiPoint(t=" + std::to_string(p.t) + ", x=[";
        for (int i = 0; i < p.dim; ++i) s += (i ? ", " : "") + std::to_string(p.x[static_cast<std::size_t>(i)]);
        return s + "])";
      });

  m.def("minkowski_square", &minkowski_square, py::arg("p"), py::arg("q"));

  py::class_<UnitNormal>(m, "UnitNormal")
      .def_property_readonly("upper", [](const UnitNormal& n) {
        return std::vector<double>(n.upper.begin(), n.upper.begin() + n.dim + 1);
      })
      .def_readonly("dim", &UnitNormal::dim)
      .def("norm_squared", &UnitNormal::norm_squared)
      .def("rapidity", &UnitNormal::rapidity);

  py::class_<Foliation, std::shared_ptr<Foliation>>(m, "Foliation")
      .def_property_readonly("s_min", &Foliation::s_min)
      .def_property_readonly("s_max", &Foliation::s_max)
      .def_property_readonly("kink_count", &Foliation::kink_count)
      .def("height", py::overload_cast<double, double>(&Foliation::height, py::const_), py::arg("s"), py::arg("x"))
      .def("kink_position", &Foliation::kink_position, py::arg("kink"), py::arg("s"))
      .def("kink_velocity", &Foliation::kink_velocity, py::arg("kink"), py::arg("s"))
      .def("normal",
           [](const Foliation& f, double s, double x, const std::string& side) {
             return leaf_normal(f, s, x, parse_side(side));
           },
           py::arg("s"), py::arg("x"), py::arg("side") = "smooth")
      .def("kink_rapidities", [](const Foliation& f, std::size_t k, double s) { return kink_rapidities(f, k, s); },
           py::arg("kink"), py::arg("s"))
      .def("export",
           [](const Foliation& f, const std::vector<double>& s_grid, const std::vector<double>& x_grid) {
             const auto e = export_foliation(f, s_grid, x_grid);
             return py::make_tuple(e.leaves_csv, e.kinks_csv);
           },
           py::arg("s_grid"), py::arg("x_grid"), "Returns (leaves_csv, kinks_csv).");

  py::class_<WedgeFoliation, Foliation, std::shared_ptr<WedgeFoliation>>(m, "WedgeFoliation")
      .def(py::init<double, double, double, double>(), py::arg("a"), py::arg("v") = 0.0, py::arg("c") = 1.0,
           py::arg("margin") = kDefaultSpacelikeMargin)
      .def_property_readonly("a", &WedgeFoliation::a)
      .def_property_readonly("v", &WedgeFoliation::v)
      .def_property_readonly("c", &WedgeFoliation::c);

  py::class_<Dn0Foliation, Foliation, std::shared_ptr<Dn0Foliation>>(m, "Dn0Foliation")
      .def_property_readonly("s_grid", &Dn0Foliation::s_grid)
      .def_property_readonly("x_grid", &Dn0Foliation::x_grid);

  m.def("dn0_wedge_foliation",
        [](double a, double apex_x, double apex_t, std::vector<double> s_grid, std::vector<double> x_grid,
           double tol) {
          return build_dn0_foliation(LeafWithKinks::wedge(a, apex_x, apex_t), std::move(s_grid),
                                     std::move(x_grid), tol);
        },
        py::arg("a"), py::arg("apex_x"), py::arg("apex_t"), py::arg("s_grid"), py::arg("x_grid"),
        py::arg("tol") = 1e-11, "Constant-distance foliation grown from a wedge-shaped initial surface.");

  // --- wave functions ---

  py::class_<PlaneWaveMode>(m, "PlaneWaveMode")
      .def(py::init([](std::vector<double> k, int energy_sign, int spin, std::complex<double> amplitude) {
             if (k.empty() || k.size() > 3) throw py::value_error("k must have 1 to 3 components");
             PlaneWaveMode mode;
             for (std::size_t i = 0; i < k.size(); ++i) mode.k[i] = k[i];
             mode.energy_sign = energy_sign;
             mode.spin = spin;
             mode.amplitude = amplitude;
             return mode;
           }),
           py::arg("k"), py::arg("energy_sign") = 1, py::arg("spin") = 0, py::arg("amplitude") = std::complex<double>(1.0, 0.0))
      .def_property_readonly("k", [](const PlaneWaveMode& m) { return m.k; })
      .def_readonly("energy_sign", &PlaneWaveMode::energy_sign)
      .def_readonly("spin", &PlaneWaveMode::spin)
      .def_readonly("amplitude", &PlaneWaveMode::amplitude);

  m.def("gaussian_packet_modes", &gaussian_packet_modes, py::arg("center"), py::arg("momentum"),
        py::arg("width"), py::arg("period"), py::arg("energy_sign") = 1, py::arg("cutoff") = 5.0);

  py::class_<ProductTerm>(m, "ProductTerm")
      .def(py::init([](std::complex<double> c, std::vector<std::vector<PlaneWaveMode>> particles) {
             return ProductTerm{c, std::move(particles)};
           }),
           py::arg("coefficient"), py::arg("particles"))
      .def_readonly("coefficient", &ProductTerm::coefficient);

  py::class_<MultiTimeWaveFunction>(m, "WaveFunction")
      .def(py::init([](const std::string& representation, int dimension, std::vector<double> masses,
                       std::vector<ProductTerm> terms) {
             return MultiTimeWaveFunction(DiracRepresentation::by_name(representation, dimension),
                                          std::move(masses), std::move(terms));
           }),
           py::arg("representation"), py::arg("dimension"), py::arg("masses"), py::arg("terms"))
      .def_property_readonly("particle_count", &MultiTimeWaveFunction::particle_count)
      .def_property_readonly("spatial_dim", &MultiTimeWaveFunction::spatial_dim)
      .def_property_readonly("component_count", &MultiTimeWaveFunction::component_count)
      .def("evaluate", [](const MultiTimeWaveFunction& psi, const std::vector<MinkowskiPoint>& cfg) {
        return Eigen::VectorXcd(psi.evaluate(cfg));
      })
      .def("current", [](const MultiTimeWaveFunction& psi, const std::vector<MinkowskiPoint>& cfg) {
        const auto T = current_tensor(psi, cfg);
        return T.components;
      }, "Flattened current tensor, first index slowest.")
      .def("divergence_residuals",
           [](const MultiTimeWaveFunction& psi, const std::vector<MinkowskiPoint>& cfg, double h) {
             return check_divergence(psi, cfg, h);
           },
           py::arg("config"), py::arg("h") = 1e-3);

  // --- guidance ---

  m.def("chart_velocity",
        [](const MultiTimeWaveFunction& psi, const Foliation& f, double s, const std::vector<double>& q,
           const std::optional<std::vector<std::string>>& sides) {
          return chart_current(psi, f, s, q, parse_sides(sides, q.size())).velocity();
        },
        py::arg("psi"), py::arg("foliation"), py::arg("s"), py::arg("q"), py::arg("sides") = py::none());

  m.def("chart_density",
        [](const MultiTimeWaveFunction& psi, const Foliation& f, double s, const std::vector<double>& q) {
          return chart_density(psi, f, s, q);
        },
        py::arg("psi"), py::arg("foliation"), py::arg("s"), py::arg("q"));

  py::class_<CurrentConditionReport>(m, "CurrentConditionReport")
      .def_readonly("s", &CurrentConditionReport::s)
      .def_readonly("q", &CurrentConditionReport::q)
      .def_readonly("slot", &CurrentConditionReport::slot)
      .def_readonly("kink", &CurrentConditionReport::kink)
      .def_readonly("flux_left", &CurrentConditionReport::flux_left)
      .def_readonly("flux_right", &CurrentConditionReport::flux_right)
      .def_readonly("mismatch", &CurrentConditionReport::mismatch)
      .def_readonly("same_sign", &CurrentConditionReport::same_sign)
      .def_readonly("null_flux", &CurrentConditionReport::null_flux);

  m.def("current_condition",
        [](const MultiTimeWaveFunction& psi, const Foliation& f, double s, const std::vector<double>& q) {
          return current_condition_check(psi, f, s, q);
        },
        py::arg("psi"), py::arg("foliation"), py::arg("s"), py::arg("q"),
        "Flux balance across the kink hypersurface through q (one coordinate must sit on a kink).");

  m.def("pushforward_residual",
        [](const MultiTimeWaveFunction& psi, const Foliation& f, double s, const std::vector<double>& q,
           const std::optional<std::vector<std::string>>& sides) {
          return pushforward_identity_check(psi, f, s, q, parse_sides(sides, q.size())).residual;
        },
        py::arg("psi"), py::arg("foliation"), py::arg("s"), py::arg("q"), py::arg("sides") = py::none());

  // --- integrator ---

  m.def("integrate",
        [](const MultiTimeWaveFunction& psi, const Foliation& f, const std::vector<double>& q0, double s0,
           double s1, double atol, double rtol) {
          IntegratorOptions opt;
          opt.atol = atol;
          opt.rtol = rtol;
          TrajectoryRecord r;
          {
            py::gil_scoped_release release;
            r = integrate(psi, f, q0, s0, s1, opt);
          }
          py::dict d;
          d["termination"] = std::string(to_string(r.termination));
          d["diagnostic"] = r.diagnostic;
          d["s_end"] = r.s_end;
          d["q_end"] = r.q_end;
          d["steps"] = r.steps;
          py::list events;
          for (const auto& e : r.events) events.append(crossing_dict(e));
          d["events"] = events;
          d["csv"] = trajectory_csv(r);
          return d;
        },
        py::arg("psi"), py::arg("foliation"), py::arg("q0"), py::arg("s0"), py::arg("s1"), py::arg("atol") = 1e-9,
        py::arg("rtol") = 1e-9);

  // --- slater ---

  py::class_<MaxwellField>(m, "MaxwellField")
      .def_static("random", [](std::uint64_t seed, int count) {
        auto e = stream_engine(seed, 0);
        return MaxwellField::random(e, count);
      }, py::arg("seed"), py::arg("count") = 3)
      .def("electric", &MaxwellField::electric)
      .def("magnetic", &MaxwellField::magnetic)
      .def("stress_tensor", [](const MaxwellField& f, const MinkowskiPoint& x) { return stress_tensor(f, x).T; });

  py::class_<Wedge3>(m, "Wedge3")
      .def(py::init([](Vec3 axis, double a, double v, double c) {
             Wedge3 w{axis, a, v, c};
             w.validate();
             return w;
           }),
           py::arg("axis"), py::arg("a"), py::arg("v") = 0.0, py::arg("c") = 1.0)
      .def_static("random", [](std::uint64_t seed) {
        auto e = stream_engine(seed, 1);
        return Wedge3::random(e);
      }, py::arg("seed"))
      .def_readonly("axis", &Wedge3::axis)
      .def_readonly("a", &Wedge3::a)
      .def_readonly("v", &Wedge3::v)
      .def_readonly("c", &Wedge3::c)
      .def("kink_point", &Wedge3::kink_point, py::arg("s"), py::arg("u"), py::arg("w"));

  m.def("slater_kink_violation",
        [](const MaxwellField& field, const Wedge3& wedge, const MinkowskiPoint& x) {
          const auto r = slater_kink_violation(field, wedge, x);
          py::dict d;
          d["j_left"] = r.j_left;
          d["j_right"] = r.j_right;
          d["mismatch_geometric"] = r.mismatch_geometric;
          d["n_k_star"] = r.n_k_star;
          d["n_k_star_spacelike"] = r.n_k_star_spacelike;
          d["sign_left"] = r.sign_left;
          d["sign_right"] = r.sign_right;
          d["violation"] = r.violation;
          return d;
        },
        py::arg("field"), py::arg("wedge"), py::arg("x"));

  // --- scenarios ---

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("dimension", &Scenario::dimension)
      .def_readonly("particles", &Scenario::particles)
      .def_readonly("seed", &Scenario::seed)
      .def_readonly("output_dir", &Scenario::output_dir)
      .def_property_readonly("run", [](const Scenario& s) { return std::string(to_string(s.run)); })
      .def("wavefunction", &build_wavefunction)
      .def("foliation", [](const Scenario& s) { return std::const_pointer_cast<Foliation>(build_foliation(s)); });

  m.def("parse_scenario", &parse_scenario, py::arg("text"));
  m.def("load_scenario", &load_scenario, py::arg("path"));

  py::class_<CheckResult>(m, "CheckResult")
      .def_readonly("name", &CheckResult::name)
      .def_readonly("gated", &CheckResult::gated)
      .def_readonly("passed", &CheckResult::passed)
      .def_readonly("value", &CheckResult::value)
      .def_readonly("relation", &CheckResult::relation)
      .def_readonly("bound", &CheckResult::bound)
      .def_readonly("detail", &CheckResult::detail)
      .def("__repr__", [](const CheckResult& c) {
        return "CheckResult('" + c.name + "', passed=" + (c.passed ? "True" : "False") + ")";
      });

  py::class_<ScenarioResult>(m, "ScenarioResult")
      .def_readonly("output_dir", &ScenarioResult::output_dir)
      .def_readonly("seed", &ScenarioResult::seed)
      .def_readonly("checks", &ScenarioResult::checks)
      .def_readonly("passed", &ScenarioResult::passed)
      .def_property_readonly("outputs", [](const ScenarioResult& r) {
        py::dict d;
        for (const auto& f : r.outputs) d[py::str(f.name)] = py::bytes(f.contents);
        return d;
      })
      .def("write", &write_outputs);

  m.def("run_scenario",
        [](const Scenario& sc, std::optional<std::uint64_t> seed, std::optional<std::string> output_dir,
           int threads) {
          RunSettings settings{seed, std::move(output_dir), threads};
          py::gil_scoped_release release;
          return run_scenario(sc, settings);
        },
        py::arg("scenario"), py::arg("seed") = py::none(), py::arg("output_dir") = py::none(),
        py::arg("threads") = 1, "Runs a scenario in memory; call .write() on the result to save it.");
}
