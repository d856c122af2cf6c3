#include "hbdm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <boost/version.hpp>

#include "hbdm/equivariance.hpp"
#include "hbdm/error.hpp"
#include "hbdm/guidance.hpp"
#include "hbdm/integrator.hpp"
#include "hbdm/io.hpp"
#include "hbdm/parallel.hpp"
#include "hbdm/slater.hpp"

#ifndef HBDM_VERSION
#define HBDM_VERSION "0.0.0"
#endif

namespace hbdm {

using nlohmann::json;

namespace {

// ------------------------------------------------------------ config access

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::ConfigError, "field '" + path + "': " + message);
}

// A JSON value together with its dotted path, for error messages.
class Node {
 public:
  Node(const json& value, std::string path) : j_(&value), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *j_; }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node operator[](const std::string& key) const {
    require_object();
    if (!j_->contains(key)) config_error(child(key), "missing");
    return Node(j_->at(key), child(key));
  }

  std::optional<Node> opt(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return (*this)[key];
  }

  void require_object() const {
    if (!j_->is_object()) config_error(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    require_object();
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, _] : j_->items()) {
      if (!known.contains(k)) config_error(child(k), "unknown field");
    }
  }

  double number() const {
    if (!j_->is_number()) config_error(path_, "expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) config_error(path_, "must be finite");
    return v;
  }
  double number(const std::string& key, double fallback) const {
    return has(key) ? (*this)[key].number() : fallback;
  }
  double positive() const {
    const double v = number();
    if (!(v > 0.0)) config_error(path_, "must be positive");
    return v;
  }
  double positive(const std::string& key, double fallback) const {
    return has(key) ? (*this)[key].positive() : fallback;
  }

  long long integer() const {
    if (!j_->is_number_integer()) config_error(path_, "expected an integer");
    return j_->get<long long>();
  }
  long long integer(const std::string& key, long long fallback) const {
    return has(key) ? (*this)[key].integer() : fallback;
  }
  std::size_t count(long long min = 0) const {
    const long long v = integer();
    if (v < min) config_error(path_, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }
  std::size_t count(const std::string& key, std::size_t fallback, long long min = 0) const {
    return has(key) ? (*this)[key].count(min) : fallback;
  }

  std::uint64_t u64() const {
    if (!j_->is_number_unsigned()) config_error(path_, "expected a non-negative integer");
    return j_->get<std::uint64_t>();
  }

  std::string string() const {
    if (!j_->is_string()) config_error(path_, "expected a string");
    return j_->get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? (*this)[key].string() : fallback;
  }

  bool boolean() const {
    if (!j_->is_boolean()) config_error(path_, "expected true or false");
    return j_->get<bool>();
  }
  bool boolean(const std::string& key, bool fallback) const {
    return has(key) ? (*this)[key].boolean() : fallback;
  }

  std::size_t size() const {
    if (!j_->is_array()) config_error(path_, "expected an array");
    return j_->size();
  }
  Node item(std::size_t i) const {
    return Node(j_->at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::vector<double> numbers(std::optional<std::size_t> expected = std::nullopt) const {
    const std::size_t n = size();
    if (expected && n != *expected) {
      config_error(path_, "expected " + std::to_string(*expected) + " entries, got " + std::to_string(n));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(item(i).number());
    return out;
  }

  /// [lo, hi] with lo < hi.
  std::pair<double, double> range() const {
    const auto v = numbers(2);
    if (!(v[0] < v[1])) config_error(path_, "expected [lo, hi] with lo < hi");
    return {v[0], v[1]};
  }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
};

Complex complex_of(const Node& n) {
  if (n.raw().is_number()) return {n.number(), 0.0};
  const auto v = n.numbers(2);
  return {v[0], v[1]};
}

Window window_of(const Node& n, int dims) {
  n.allow({"lo", "hi"});
  Window w;
  w.lo = n["lo"].numbers(static_cast<std::size_t>(dims));
  w.hi = n["hi"].numbers(static_cast<std::size_t>(dims));
  for (int i = 0; i < dims; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(w.lo[k] < w.hi[k])) config_error(n.path(), "needs lo < hi in every dimension");
  }
  return w;
}

// Explicit increasing list or {lo, hi, n}.
std::vector<double> grid_of(const Node& n) {
  std::vector<double> g;
  if (n.raw().is_array()) {
    g = n.numbers();
  } else {
    n.allow({"lo", "hi", "n"});
    const double lo = n["lo"].number();
    const double hi = n["hi"].number();
    const std::size_t count = n["n"].count(2);
    if (!(lo < hi)) config_error(n.path(), "needs lo < hi");
    for (std::size_t i = 0; i < count; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  if (g.empty()) config_error(n.path(), "grid is empty");
  for (std::size_t i = 1; i < g.size(); ++i) {
    if (!(g[i] > g[i - 1])) config_error(n.path(), "grid must be strictly increasing");
  }
  return g;
}

IntegratorOptions integrator_of(const std::optional<Node>& n) {
  IntegratorOptions o;
  if (!n) return o;
  n->allow({"atol", "rtol", "initial_step", "max_step", "min_step", "event_tol", "piece_tol",
            "kink_step_floor", "max_steps"});
  o.atol = n->positive("atol", o.atol);
  o.rtol = n->positive("rtol", o.rtol);
  o.initial_step = n->positive("initial_step", o.initial_step);
  o.max_step = n->positive("max_step", o.max_step);
  o.min_step = n->positive("min_step", o.min_step);
  o.event_tol = n->positive("event_tol", o.event_tol);
  o.piece_tol = n->positive("piece_tol", o.piece_tol);
  o.kink_step_floor = n->positive("kink_step_floor", o.kink_step_floor);
  o.max_steps = n->count("max_steps", o.max_steps, 1);
  return o;
}

// --------------------------------------------------------------- run plans

struct SimulatePlan {
  double s0 = 0.0;
  double s1 = 1.0;
  std::vector<std::vector<double>> starts;
  // Sampled starts (used when `starts` is empty).
  std::size_t count = 0;
  bool from_density = true;
  Window window;
  std::optional<Window> reference;
  bool require_crossing = false;
  std::size_t max_attempts = 0;
  IntegratorOptions integrator;
  std::size_t write_trajectories = 5;
  double partner_threshold = 1e-3;
  std::optional<double> own_jump_max;
  std::optional<double> partner_fraction_min;
  std::optional<double> partner_jump_max;
  std::optional<double> reversibility_factor;
  std::optional<std::size_t> min_events;
  double max_failed_fraction = 0.0;
};

struct EquivariancePlan {
  double s0 = 0.0;
  std::vector<double> targets;
  std::size_t M = 0;
  Window window;
  EquivarianceOptions options;
  bool expect_exceed = false;
  std::optional<double> min_crossed_fraction;
  double max_aborted_fraction = 0.01;
  bool gate_flux = true;
};

struct CurrentConditionPlan {
  std::size_t points = 100;
  std::pair<double, double> s_range{-1.0, 1.0};
  std::pair<double, double> offset_range{0.05, 3.0};
  bool aux_product = true;
  double tolerance = 1e-9;
  std::size_t pushforward_points = 100;
  std::pair<double, double> q_range{-3.0, 3.0};
  double pushforward_tolerance = 1e-9;
  std::size_t side_gap_points = 10;
  double side_tolerance = 1e-12;
};

struct DivergencePlan {
  std::size_t points = 100;
  std::pair<double, double> t_range{-2.0, 2.0};
  std::pair<double, double> x_range{-3.0, 3.0};
  double h = 1e-3;
  double tolerance = 1e-6;
};

struct SlaterPlan {
  std::size_t trials = 100;
  int modes = 3;
  double extent = 2.0;
  std::size_t max_retries = 10;
  std::optional<Wedge3> wedge;  // random per trial when absent
  double hbdm_tolerance = 1e-9;
  std::size_t divergence_points = 20;
  double divergence_h = 1e-4;
  double constant_tolerance = 1e-6;
  double beta0 = 0.5;
  double kappa = 1.0;
  double omega = 1.0;
  double rotating_min = 1e-3;
};

struct FoliationPlan {
  std::vector<double> s_grid;
  std::vector<double> x_grid;
  std::optional<double> closed_form_tolerance;
  std::size_t distance_points = 0;
  double distance_factor = 2.0;
};

SimulatePlan simulate_plan(const Node& run, int N) {
  run.allow({"type", "s0", "s1", "starts", "sampling", "integrator", "write_trajectories", "checks"});
  SimulatePlan p;
  p.s0 = run["s0"].number();
  p.s1 = run["s1"].number();
  if (p.s0 == p.s1) config_error(run.path() + ".s1", "must differ from s0");
  p.integrator = integrator_of(run.opt("integrator"));
  p.write_trajectories = run.count("write_trajectories", p.write_trajectories);
  if (auto starts = run.opt("starts")) {
    for (std::size_t i = 0; i < starts->size(); ++i) p.starts.push_back(starts->item(i).numbers(static_cast<std::size_t>(N)));
    if (p.starts.empty()) config_error(starts->path(), "needs at least one start");
    if (run.has("sampling")) config_error(run.path() + ".sampling", "cannot be combined with starts");
  } else {
    const Node s = run["sampling"];
    s.allow({"count", "method", "window", "reference", "require_crossing", "max_attempts"});
    p.count = s["count"].count(1);
    const std::string method = s.string("method", "density");
    if (method != "density" && method != "uniform") config_error(s.path() + ".method", "expected 'density' or 'uniform'");
    p.from_density = method == "density";
    p.window = window_of(s["window"], N);
    if (auto r = s.opt("reference")) p.reference = window_of(*r, N);
    p.require_crossing = s.boolean("require_crossing", false);
    p.max_attempts = s.count("max_attempts", p.require_crossing ? 20 * p.count : p.count, 1);
    if (p.max_attempts < p.count) config_error(s.path() + ".max_attempts", "must be at least count");
  }
  if (auto c = run.opt("checks")) {
    c->allow({"own_jump_max", "partner_threshold", "partner_fraction_min", "partner_jump_max",
              "reversibility_factor", "min_events", "max_failed_fraction"});
    p.partner_threshold = c->positive("partner_threshold", p.partner_threshold);
    if (c->has("own_jump_max")) p.own_jump_max = (*c)["own_jump_max"].positive();
    if (c->has("partner_fraction_min")) p.partner_fraction_min = (*c)["partner_fraction_min"].number();
    if (c->has("partner_jump_max")) p.partner_jump_max = (*c)["partner_jump_max"].positive();
    if (c->has("reversibility_factor")) p.reversibility_factor = (*c)["reversibility_factor"].positive();
    if (c->has("min_events")) p.min_events = (*c)["min_events"].count();
    p.max_failed_fraction = c->number("max_failed_fraction", p.max_failed_fraction);
  }
  return p;
}

EquivariancePlan equivariance_plan(const Node& run, int N) {
  run.allow({"type", "s0", "targets", "M", "window", "reference", "envelope_factor", "envelope_grid",
             "mass_epsilon", "joint_bins", "marginal_bins", "quadrature", "flux_quadrature",
             "tv_factor", "control", "non_leaf_time", "integrator", "checks"});
  EquivariancePlan p;
  p.s0 = run["s0"].number();
  p.targets = run["targets"].numbers();
  if (p.targets.empty()) config_error(run.path() + ".targets", "needs at least one leaf");
  for (double t : p.targets) {
    if (!(t > p.s0)) config_error(run.path() + ".targets", "targets must lie after s0");
  }
  if (!std::is_sorted(p.targets.begin(), p.targets.end())) config_error(run.path() + ".targets", "must be increasing");
  p.M = run["M"].count(1);
  p.window = window_of(run["window"], N);
  auto& o = p.options;
  if (auto r = run.opt("reference")) o.sampling.reference = window_of(*r, N);
  o.sampling.envelope_factor = run.positive("envelope_factor", o.sampling.envelope_factor);
  o.sampling.grid = static_cast<int>(run.count("envelope_grid", static_cast<std::size_t>(o.sampling.grid), 2));
  o.sampling.mass_epsilon = run.positive("mass_epsilon", o.sampling.mass_epsilon);
  o.integrator = integrator_of(run.opt("integrator"));
  o.joint_bins = static_cast<int>(run.count("joint_bins", static_cast<std::size_t>(o.joint_bins), 1));
  o.marginal_bins = static_cast<int>(run.count("marginal_bins", static_cast<std::size_t>(o.marginal_bins), 1));
  o.quadrature = static_cast<int>(run.count("quadrature", static_cast<std::size_t>(o.quadrature), 1));
  o.flux_quadrature = static_cast<int>(run.count("flux_quadrature", static_cast<std::size_t>(o.flux_quadrature), 2));
  o.tv_factor = run.positive("tv_factor", o.tv_factor);
  if (o.quadrature % o.joint_bins != 0 || o.quadrature % o.marginal_bins != 0) {
    config_error(run.path() + ".quadrature", "must be a multiple of joint_bins and marginal_bins");
  }
  const std::string control = run.string("control", "none");
  if (control == "none") o.control = Control::None;
  else if (control == "frozen") o.control = Control::Frozen;
  else if (control == "frozen_at_kink") o.control = Control::FrozenAtKink;
  else config_error(run.path() + ".control", "expected 'none', 'frozen' or 'frozen_at_kink'");
  if (run.has("non_leaf_time")) o.non_leaf_time = run["non_leaf_time"].number();
  if (auto c = run.opt("checks")) {
    c->allow({"expect", "min_crossed_fraction", "max_aborted_fraction", "flux"});
    const std::string expect = c->string("expect", "within");
    if (expect != "within" && expect != "exceed") config_error(c->path() + ".expect", "expected 'within' or 'exceed'");
    p.expect_exceed = expect == "exceed";
    if (c->has("min_crossed_fraction")) p.min_crossed_fraction = (*c)["min_crossed_fraction"].number();
    p.max_aborted_fraction = c->number("max_aborted_fraction", p.max_aborted_fraction);
    p.gate_flux = c->boolean("flux", !p.expect_exceed);
  } else {
    p.gate_flux = o.control == Control::None;
  }
  return p;
}

CurrentConditionPlan current_condition_plan(const Node& run) {
  run.allow({"type", "points", "s_range", "offset_range", "aux_product", "tolerance", "pushforward"});
  CurrentConditionPlan p;
  p.points = run.count("points", p.points, 1);
  if (auto r = run.opt("s_range")) p.s_range = r->range();
  if (auto r = run.opt("offset_range")) p.offset_range = r->range();
  if (!(p.offset_range.first > 0.0)) config_error(run.path() + ".offset_range", "offsets must be positive");
  p.aux_product = run.boolean("aux_product", p.aux_product);
  p.tolerance = run.positive("tolerance", p.tolerance);
  if (auto pf = run.opt("pushforward")) {
    pf->allow({"points", "q_range", "tolerance", "side_gap_points", "side_tolerance"});
    p.pushforward_points = pf->count("points", p.pushforward_points);
    if (auto r = pf->opt("q_range")) p.q_range = r->range();
    p.pushforward_tolerance = pf->positive("tolerance", p.pushforward_tolerance);
    p.side_gap_points = pf->count("side_gap_points", p.side_gap_points);
    p.side_tolerance = pf->positive("side_tolerance", p.side_tolerance);
  }
  return p;
}

DivergencePlan divergence_plan(const Node& run) {
  run.allow({"type", "points", "t_range", "x_range", "h", "tolerance"});
  DivergencePlan p;
  p.points = run.count("points", p.points, 1);
  if (auto r = run.opt("t_range")) p.t_range = r->range();
  if (auto r = run.opt("x_range")) p.x_range = r->range();
  p.h = run.positive("h", p.h);
  p.tolerance = run.positive("tolerance", p.tolerance);
  return p;
}

Wedge3 wedge3_of(const Node& f) {
  Wedge3 w;
  const auto axis = f["axis"].numbers(3);
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (!(n > 0.0)) config_error(f.path() + ".axis", "must be nonzero");
  w.axis = {axis[0] / n, axis[1] / n, axis[2] / n};
  w.a = f["a"].number();
  w.v = f.number("v", 0.0);
  w.c = f.positive("c", 1.0);
  try {
    w.validate();
  } catch (const Error& e) {
    config_error(f.path(), e.what());
  }
  return w;
}

SlaterPlan slater_plan(const Node& run, const Node& foliation) {
  run.allow({"type", "trials", "modes", "extent", "max_retries", "hbdm_tolerance", "divergence"});
  SlaterPlan p;
  foliation.allow({"type", "random", "axis", "a", "v", "c"});
  if (!foliation.boolean("random", false)) p.wedge = wedge3_of(foliation);
  p.trials = run.count("trials", p.trials, 1);
  p.modes = static_cast<int>(run.count("modes", static_cast<std::size_t>(p.modes), 1));
  p.extent = run.positive("extent", p.extent);
  p.max_retries = run.count("max_retries", p.max_retries, 1);
  p.hbdm_tolerance = run.positive("hbdm_tolerance", p.hbdm_tolerance);
  if (auto d = run.opt("divergence")) {
    d->allow({"points", "h", "constant_tolerance", "beta0", "kappa", "omega", "rotating_min"});
    p.divergence_points = d->count("points", p.divergence_points, 1);
    p.divergence_h = d->positive("h", p.divergence_h);
    p.constant_tolerance = d->positive("constant_tolerance", p.constant_tolerance);
    p.beta0 = d->number("beta0", p.beta0);
    p.kappa = d->number("kappa", p.kappa);
    p.omega = d->number("omega", p.omega);
    p.rotating_min = d->positive("rotating_min", p.rotating_min);
    if (p.kappa == 0.0 && p.omega == 0.0) config_error(d->path(), "kappa and omega cannot both vanish");
  }
  return p;
}

FoliationPlan foliation_plan(const Node& run) {
  run.allow({"type", "s_grid", "x_grid", "checks"});
  FoliationPlan p;
  p.s_grid = grid_of(run["s_grid"]);
  p.x_grid = grid_of(run["x_grid"]);
  if (auto c = run.opt("checks")) {
    c->allow({"closed_form_tolerance", "distance_points", "distance_factor"});
    if (c->has("closed_form_tolerance")) p.closed_form_tolerance = (*c)["closed_form_tolerance"].positive();
    p.distance_points = c->count("distance_points", 0);
    p.distance_factor = c->positive("distance_factor", p.distance_factor);
  }
  return p;
}

// ------------------------------------------------------ physics from config

std::vector<PlaneWaveMode> modes_of(const Node& list, int d) {
  std::vector<PlaneWaveMode> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Node m = list.item(i);
    m.require_object();
    if (m.has("packet")) {
      m.allow({"packet"});
      const Node p = m["packet"];
      p.allow({"center", "momentum", "width", "period", "energy_sign", "cutoff"});
      if (d != 1) config_error(p.path(), "packets are available in dimension 1 only");
      const int sign = static_cast<int>(p.integer("energy_sign", 1));
      if (sign != 1 && sign != -1) config_error(p.path() + ".energy_sign", "expected +1 or -1");
      const auto modes = gaussian_packet_modes(p["center"].number(), p["momentum"].number(),
                                               p["width"].positive(), p["period"].positive(), sign,
                                               p.positive("cutoff", 5.0));
      out.insert(out.end(), modes.begin(), modes.end());
      continue;
    }
    m.allow({"k", "energy_sign", "spin", "amplitude"});
    PlaneWaveMode mode;
    const Node k = m["k"];
    if (k.raw().is_number()) {
      if (d != 1) config_error(k.path(), "expected " + std::to_string(d) + " components");
      mode.k[0] = k.number();
    } else {
      const auto v = k.numbers(static_cast<std::size_t>(d));
      std::copy(v.begin(), v.end(), mode.k.begin());
    }
    mode.energy_sign = static_cast<int>(m.integer("energy_sign", 1));
    if (mode.energy_sign != 1 && mode.energy_sign != -1) config_error(m.path() + ".energy_sign", "expected +1 or -1");
    mode.spin = static_cast<int>(m.integer("spin", 0));
    if (mode.spin < 0 || mode.spin > (d == 3 ? 1 : 0)) config_error(m.path() + ".spin", "out of range");
    if (auto a = m.opt("amplitude")) mode.amplitude = complex_of(*a);
    out.push_back(mode);
  }
  return out;
}

MultiTimeWaveFunction wavefunction_of(const Node& w, int d, int N) {
  w.allow({"representation", "masses", "terms"});
  const std::string rep_name = w.string("representation", "dirac");
  std::optional<DiracRepresentation> rep;
  try {
    rep = DiracRepresentation::by_name(rep_name, d);
  } catch (const Error& e) {
    config_error(w.path() + ".representation", e.what());
  }
  const auto masses = w["masses"].numbers(static_cast<std::size_t>(N));
  for (double m : masses) {
    if (m < 0.0) config_error(w.path() + ".masses", "masses must be non-negative");
  }
  const Node terms = w["terms"];
  if (terms.size() == 0) config_error(terms.path(), "needs at least one term");
  std::vector<ProductTerm> out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Node t = terms.item(i);
    t.allow({"coefficient", "particles"});
    ProductTerm term;
    if (auto c = t.opt("coefficient")) term.coefficient = complex_of(*c);
    const Node parts = t["particles"];
    if (parts.size() != static_cast<std::size_t>(N)) {
      config_error(parts.path(), "expected one mode list per particle (" + std::to_string(N) + ")");
    }
    for (std::size_t j = 0; j < parts.size(); ++j) {
      auto modes = modes_of(parts.item(j), d);
      if (modes.empty()) config_error(parts.item(j).path(), "needs at least one mode");
      term.particles.push_back(std::move(modes));
    }
    out.push_back(std::move(term));
  }
  try {
    return MultiTimeWaveFunction(*rep, masses, std::move(out));
  } catch (const Error& e) {
    config_error(w.path(), e.what());
  }
}

LeafWithKinks initial_surface_of(const Node& n) {
  const std::string type = n["type"].string();
  if (type == "wedge") {
    n.allow({"type", "a", "apex_x", "apex_t"});
    return LeafWithKinks::wedge(n["a"].number(), n.number("apex_x", 0.0), n.number("apex_t", 0.0));
  }
  if (type == "flat") {
    n.allow({"type", "t0"});
    return LeafWithKinks::flat(n.number("t0", 0.0));
  }
  if (type == "bump") {
    n.allow({"type", "amplitude", "width", "t0"});
    return LeafWithKinks::bump(n["amplitude"].number(), n["width"].positive(), n.number("t0", 0.0));
  }
  config_error(n.path() + ".type", "expected 'wedge', 'flat' or 'bump'");
}

struct Dn0Spec {
  LeafWithKinks initial;
  std::vector<double> s_grid;
  std::vector<double> x_grid;
  double tolerance;
  Dn0Options options;
};

Dn0Spec dn0_spec_of(const Node& f) {
  f.allow({"type", "initial", "s_grid", "x_grid", "tolerance", "kink_jump_cells", "seeds"});
  std::optional<LeafWithKinks> initial;
  try {
    initial = initial_surface_of(f["initial"]);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(f.path() + ".initial", e.what());
  }
  Dn0Spec spec{*initial, grid_of(f["s_grid"]), grid_of(f["x_grid"]), f.positive("tolerance", 1e-10), {}};
  if (!(spec.s_grid.front() > 0.0)) config_error(f.path() + ".s_grid", "distances must be positive");
  spec.options.kink_jump_cells = f.positive("kink_jump_cells", spec.options.kink_jump_cells);
  spec.options.distance.seeds = static_cast<int>(f.count("seeds", static_cast<std::size_t>(spec.options.distance.seeds), 16));
  return spec;
}

// Validates the foliation block; builds it when `build` is set.
std::shared_ptr<const Foliation> foliation_of(const Node& f, bool build) {
  const std::string type = f["type"].string();
  if (type == "flat") {
    f.allow({"type"});
    return std::make_shared<WedgeFoliation>(WedgeFoliation::flat());
  }
  if (type == "wedge") {
    f.allow({"type", "a", "v", "c"});
    try {
      return std::make_shared<WedgeFoliation>(f["a"].number(), f.number("v", 0.0), f.positive("c", 1.0));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError) throw;
      config_error(f.path(), e.what());
    }
  }
  if (type == "dn0") {
    const Dn0Spec spec = dn0_spec_of(f);
    if (!build) return nullptr;
    return build_dn0_foliation(spec.initial, spec.s_grid, spec.x_grid, spec.tolerance, spec.options);
  }
  if (type == "wedge3") config_error(f.path() + ".type", "the 3+1 wedge is only used by slater-demo");
  config_error(f.path() + ".type", "expected 'flat', 'wedge' or 'dn0'");
}

RunType run_type_of(const Node& t) {
  const std::string s = t.string();
  for (RunType r : {RunType::Simulate, RunType::Equivariance, RunType::CheckCurrentCondition,
                    RunType::CheckDivergence, RunType::SlaterDemo, RunType::FoliationExport}) {
    if (s == to_string(r)) return r;
  }
  config_error(t.path(), "unknown run type '" + s + "'");
}

bool needs_foliation(RunType r) { return r != RunType::CheckDivergence; }
bool needs_wavefunction(RunType r) { return r != RunType::FoliationExport; }

void validate(const Scenario& sc) {
  const Node root(sc.config, "");
  const Node run = root["run"];
  const int d = sc.dimension;
  const int N = sc.particles;
  if (sc.run == RunType::SlaterDemo) {
    if (d != 3) config_error("dimension", "slater-demo needs dimension 3");
    if (N != 1) config_error("particles", "slater-demo takes a single particle");
    const Node f = root["foliation"];
    if (f["type"].string() != "wedge3") config_error(f.path() + ".type", "slater-demo needs a 'wedge3' foliation");
    (void)slater_plan(run, f);
  } else if (d != 1 && sc.run != RunType::CheckDivergence) {
    config_error("dimension", std::string(to_string(sc.run)) + " supports dimension 1 only");
  }
  if (needs_wavefunction(sc.run)) (void)wavefunction_of(root["wavefunction"], d, N);
  if (needs_foliation(sc.run) && sc.run != RunType::SlaterDemo) (void)foliation_of(root["foliation"], false);
  switch (sc.run) {
    case RunType::Simulate: (void)simulate_plan(run, N); break;
    case RunType::Equivariance: (void)equivariance_plan(run, N); break;
    case RunType::CheckCurrentCondition: (void)current_condition_plan(run); break;
    case RunType::CheckDivergence: (void)divergence_plan(run); break;
    case RunType::FoliationExport: (void)foliation_plan(run); break;
    case RunType::SlaterDemo: break;
  }
}

// ---------------------------------------------------------------- results

struct Collector {
  std::vector<CheckResult> checks;
  std::vector<OutputFile> outputs;

  void check(std::string name, double value, const std::string& relation, double bound,
             bool gated = true, std::string detail = {}) {
    bool ok = false;
    if (relation == "<") ok = value < bound;
    else if (relation == "<=") ok = value <= bound;
    else if (relation == ">") ok = value > bound;
    else if (relation == ">=") ok = value >= bound;
    else if (relation == "==") ok = value == bound;
    checks.push_back({std::move(name), gated, ok, value, relation, bound, std::move(detail)});
  }
  void report(std::string name, double value, std::string detail = {}) {
    checks.push_back({std::move(name), false, true, value, "", 0.0, std::move(detail)});
  }
  void file(std::string name, std::string contents) { outputs.push_back({std::move(name), std::move(contents)}); }
};

// Short number for check names.
std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return stem + buf + ext;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

json vec_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

// ------------------------------------------------------------------ runners

// Infinity norm of the Jacobian of the backward map q_end -> q0, by central
// differences at a tight tolerance. Errors committed on the way back are
// amplified by up to this factor.
double backward_amplification(const MultiTimeWaveFunction& psi, const Foliation& F,
                              const TrajectoryRecord& fwd, double s0, const IntegratorOptions& base) {
  IntegratorOptions o = base;
  o.atol = o.rtol = 1e-12;
  o.record_samples = false;
  const std::size_t n = fwd.q_end.size();
  const double h = 1e-6;
  Eigen::MatrixXd J(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> plus = fwd.q_end;
    std::vector<double> minus = fwd.q_end;
    plus[j] += h;
    minus[j] -= h;
    const auto bp = integrate(psi, F, plus, fwd.s_end, s0, o, fwd.pieces_end);
    const auto bm = integrate(psi, F, minus, fwd.s_end, s0, o, fwd.pieces_end);
    if (bp.termination != Termination::ReachedEnd || bm.termination != Termination::ReachedEnd) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    for (std::size_t i = 0; i < n; ++i) {
      J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (bp.q_end[i] - bm.q_end[i]) / (2.0 * h);
    }
  }
  return J.cwiseAbs().rowwise().sum().maxCoeff();
}

void run_simulate(const Scenario& sc, const MultiTimeWaveFunction& psi, const Foliation& F,
                  std::uint64_t seed, int threads, Collector& out) {
  const SimulatePlan p = simulate_plan(Node(sc.config, "")["run"], sc.particles);
  const int N = sc.particles;
  std::vector<std::vector<double>> candidates = p.starts;
  std::size_t wanted = p.starts.size();
  if (candidates.empty()) {
    wanted = p.count;
    if (p.from_density) {
      SamplingOptions so;
      so.reference = p.reference;
      so.threads = threads;
      candidates = sample_initial(psi, F, p.s0, p.window, p.max_attempts, seed, so).q;
    } else {
      for (std::size_t i = 0; i < p.max_attempts; ++i) {
        auto e = stream_engine(seed, i);
        std::vector<double> q(static_cast<std::size_t>(N));
        for (std::size_t j = 0; j < q.size(); ++j) q[j] = p.window.lo[j] + (p.window.hi[j] - p.window.lo[j]) * uniform01(e);
        candidates.push_back(std::move(q));
      }
    }
  }

  // Integrate in index order, chunk by chunk, until enough trajectories qualify.
  struct Item {
    std::size_t index;
    TrajectoryRecord forward;
    std::optional<TrajectoryRecord> backward;
    double amplification;
  };
  std::vector<Item> selected;
  std::size_t attempted = 0;
  std::size_t failed = 0;
  IntegratorOptions opt = p.integrator;
  std::size_t next = 0;
  while (selected.size() < wanted && next < candidates.size()) {
    const std::size_t chunk = std::min(candidates.size() - next, std::max<std::size_t>(wanted - selected.size(), 64));
    std::vector<TrajectoryRecord> fwd(chunk);
    std::vector<std::optional<TrajectoryRecord>> back(chunk);
    std::vector<double> amp(chunk, 1.0);
    parallel_for(chunk, threads, [&](std::size_t i) {
      fwd[i] = integrate(psi, F, candidates[next + i], p.s0, p.s1, opt);
      if (p.reversibility_factor && fwd[i].termination == Termination::ReachedEnd) {
        IntegratorOptions bo = opt;
        bo.record_samples = false;
        back[i] = integrate(psi, F, fwd[i].q_end, p.s1, p.s0, bo, fwd[i].pieces_end);
        if (!fwd[i].events.empty() || p.require_crossing) amp[i] = backward_amplification(psi, F, fwd[i], p.s0, bo);
      }
    });
    for (std::size_t i = 0; i < chunk && selected.size() < wanted; ++i) {
      ++attempted;
      if (fwd[i].termination != Termination::ReachedEnd) {
        ++failed;
        if (!p.require_crossing) selected.push_back({next + i, std::move(fwd[i]), std::move(back[i]), amp[i]});
        continue;
      }
      if (p.require_crossing && fwd[i].events.empty()) continue;
      selected.push_back({next + i, std::move(fwd[i]), std::move(back[i]), amp[i]});
    }
    next += chunk;
  }

  std::vector<TrajectoryRecord> records;
  for (const auto& it : selected) records.push_back(it.forward);
  const auto jumps = summarize_jumps(records, p.partner_threshold);

  json summary;
  summary["s0"] = p.s0;
  summary["s1"] = p.s1;
  summary["attempted"] = attempted;
  summary["selected"] = selected.size();
  summary["failed"] = failed;
  summary["events"] = jumps.events;
  summary["max_own_jump"] = jumps.max_own_jump;
  summary["max_partner_jump"] = jumps.max_partner_jump;
  summary["min_partner_jump"] = jumps.min_partner_jump;
  summary["partner_fraction_above"] = jumps.partner_fraction_above;
  summary["partner_threshold"] = p.partner_threshold;
  summary["max_flux_mismatch"] = jumps.max_flux_mismatch;
  summary["all_sign_rules_ok"] = jumps.all_sign_rules_ok;
  double max_reversal = 0.0;
  double max_conditioned = 0.0;
  std::size_t within_raw = 0;
  std::size_t reversal_failures = 0;
  json trajectories = json::array();
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const auto& it = selected[k];
    json t;
    t["candidate"] = it.index;
    t["q0"] = vec_json(candidates[it.index]);
    t["q_end"] = vec_json(it.forward.q_end);
    t["s_end"] = it.forward.s_end;
    t["termination"] = std::string(to_string(it.forward.termination));
    t["events"] = it.forward.events.size();
    t["steps"] = it.forward.steps;
    if (it.backward) {
      const auto& b = *it.backward;
      const bool ok = b.termination == Termination::ReachedEnd && b.events.size() == it.forward.events.size();
      const double err = max_abs_diff(b.q_end, candidates[it.index]);
      t["reversal_error"] = err;
      t["reversal_events"] = b.events.size();
      t["backward_amplification"] = it.amplification;
      if (ok) {
        max_reversal = std::max(max_reversal, err);
        max_conditioned = std::max(max_conditioned, err / std::max(1.0, it.amplification));
        within_raw += err <= *p.reversibility_factor * opt.atol;
      } else {
        ++reversal_failures;
      }
    }
    trajectories.push_back(std::move(t));
    if (k < p.write_trajectories) out.file(indexed("trajectory_", k, ".csv"), trajectory_csv(it.forward));
  }
  summary["trajectories"] = std::move(trajectories);
  out.file("events.csv", events_csv(records, N));

  const double n_sel = static_cast<double>(selected.size());
  out.check("trajectories_selected", n_sel, ">=", static_cast<double>(wanted), true,
            p.require_crossing ? "trajectories with at least one kink crossing" : "");
  out.check("failed_fraction", attempted ? static_cast<double>(failed) / static_cast<double>(attempted) : 0.0, "<=",
            p.max_failed_fraction);
  if (p.min_events) out.check("kink_events", static_cast<double>(jumps.events), ">=", static_cast<double>(*p.min_events));
  if (p.own_jump_max) out.check("max_own_velocity_jump", jumps.max_own_jump, "<", *p.own_jump_max);
  if (p.partner_fraction_min) {
    out.check("partner_jump_fraction", jumps.partner_fraction_above, ">=", *p.partner_fraction_min, true,
              "fraction of events with a partner jump above " + label(p.partner_threshold));
  }
  if (p.partner_jump_max) out.check("max_partner_velocity_jump", jumps.max_partner_jump, "<", *p.partner_jump_max);
  out.report("max_flux_mismatch", jumps.max_flux_mismatch);
  out.check("sign_rule", jumps.all_sign_rules_ok ? 1.0 : 0.0, "==", 1.0);
  if (p.reversibility_factor) {
    const double bound = *p.reversibility_factor * opt.atol;
    summary["max_reversal_error"] = max_reversal;
    summary["max_conditioned_reversal_error"] = max_conditioned;
    summary["within_raw_bound"] = within_raw;
    summary["reversal_failures"] = reversal_failures;
    out.check("reversal_failures", static_cast<double>(reversal_failures), "==", 0.0);
    out.check("max_reversal_error / backward amplification", max_conditioned, "<=", bound, true,
              "amplification = max(1, |d q0 / d q_end|_inf) of the backward map");
    out.report("max_reversal_error (raw)", max_reversal);
    out.report("fraction within raw bound", n_sel > 0 ? static_cast<double>(within_raw) / n_sel : 0.0,
               "raw bound " + label(bound));
  }
  out.file("simulate.json", summary.dump(2) + "\n");
}

json leaf_json(const LeafStatistics& l) {
  json j;
  j["s"] = l.s;
  j["tv_joint"] = l.tv_joint;
  j["tv_bound_joint"] = l.tv_bound_joint;
  j["tv_marginal"] = l.tv_marginal;
  j["tv_bound_marginal"] = l.tv_bound_marginal;
  j["outside_empirical"] = l.outside_empirical;
  j["outside_theory"] = l.outside_theory;
  j["aborted_fraction"] = l.aborted_fraction;
  j["chi2"] = l.chi2;
  j["dof"] = l.dof;
  j["p_value"] = l.p_value;
  j["within_bound"] = l.within_bound;
  return j;
}

std::string marginal_csv(const LeafStatistics& l, const Window& w) {
  CsvWriter csv({"particle", "bin", "lo", "hi", "empirical", "theory"});
  for (std::size_t j = 0; j < l.empirical_marginal.size(); ++j) {
    const auto& e = l.empirical_marginal[j];
    const double width = (w.hi[j] - w.lo[j]) / static_cast<double>(e.size());
    for (std::size_t b = 0; b < e.size(); ++b) {
      csv.row({static_cast<double>(j + 1), static_cast<double>(b), w.lo[j] + width * static_cast<double>(b),
               w.lo[j] + width * static_cast<double>(b + 1), e[b], l.theory_marginal[j][b]});
    }
  }
  return csv.str();
}

void run_equivariance_block(const Scenario& sc, const MultiTimeWaveFunction& psi, const Foliation& F,
                            std::uint64_t seed, int threads, Collector& out) {
  EquivariancePlan p = equivariance_plan(Node(sc.config, "")["run"], sc.particles);
  p.options.threads = threads;
  p.options.sampling.threads = threads;
  const EnsembleRun r = run_equivariance(psi, F, p.s0, p.targets, p.window, p.M, seed, p.options);

  json rep;
  rep["scenario"] = sc.name;
  rep["seed"] = r.seed;
  rep["M"] = r.M;
  rep["s0"] = r.s0;
  rep["targets"] = r.targets;
  rep["control"] = sc.config["run"].value("control", "none");
  rep["envelope"] = r.initial.envelope;
  rep["envelope_rebuilds"] = r.initial.rebuilds;
  rep["proposals"] = r.initial.proposals;
  rep["window_mass"] = r.initial.window_mass;
  rep["mass_fraction"] = r.initial.mass_fraction;
  rep["aborted"] = r.aborted;
  rep["aborted_fraction"] = r.aborted_fraction;
  rep["crossed"] = r.crossed;
  rep["crossed_fraction"] = r.crossed_fraction;
  rep["kink_events"] = r.jumps.events;
  rep["max_own_jump"] = r.jumps.max_own_jump;
  rep["partner_fraction_above_1e-3"] = r.jumps.partner_fraction_above;
  rep["max_flux_mismatch"] = r.jumps.max_flux_mismatch;
  rep["leaves"] = json::array();
  for (std::size_t i = 0; i < r.leaves.size(); ++i) {
    const auto& l = r.leaves[i];
    rep["leaves"].push_back(leaf_json(l));
    out.file(indexed("histogram_joint_", i, ".csv"), histogram_csv(l, p.window, p.options.joint_bins));
    out.file(indexed("histogram_marginal_", i, ".csv"), marginal_csv(l, p.window));
  }
  rep["flux"] = json::array();
  for (const auto& f : r.flux) {
    rep["flux"].push_back({{"slot", f.slot + 1}, {"kink", f.kink}, {"expected_left", f.expected_left},
                           {"expected_right", f.expected_right}, {"observed_signed", f.observed_signed},
                           {"observed_total", f.observed_total}, {"sigma", f.sigma}, {"within", f.within}});
  }
  if (r.non_leaf) {
    rep["non_leaf"] = leaf_json(*r.non_leaf);
    rep["non_leaf_unresolved"] = r.non_leaf_unresolved;
  }
  out.file("equivariance.json", rep.dump(2) + "\n");

  for (std::size_t i = 0; i < r.leaves.size(); ++i) {
    const auto& l = r.leaves[i];
    const std::string tag = "leaf[" + std::to_string(i) + "] s=" + label(l.s);
    const double tv_m = l.tv_marginal.empty() ? 0.0 : *std::max_element(l.tv_marginal.begin(), l.tv_marginal.end());
    const bool last = i + 1 == r.leaves.size();
    if (p.expect_exceed) {
      out.check(tag + " tv_marginal", tv_m, ">", l.tv_bound_marginal, last, "negative control must exceed the bound");
      out.report(tag + " tv_joint", l.tv_joint);
    } else {
      out.check(tag + " tv_joint", l.tv_joint, "<=", l.tv_bound_joint);
      out.check(tag + " tv_marginal", tv_m, "<=", l.tv_bound_marginal);
    }
    out.report(tag + " chi2_p_value", l.p_value);
  }
  if (p.min_crossed_fraction) out.check("crossed_fraction", r.crossed_fraction, ">=", *p.min_crossed_fraction);
  out.check("aborted_fraction", r.aborted_fraction, "<", p.max_aborted_fraction, !p.expect_exceed);
  for (const auto& f : r.flux) {
    const double expected = f.expected_left;
    const double dev = std::abs(static_cast<double>(f.observed_signed) - expected);
    out.check("flux slot " + std::to_string(f.slot + 1) + " kink " + std::to_string(f.kink), dev, "<=",
              3.0 * f.sigma + 1.0, p.gate_flux, "signed crossings minus expected flux");
  }
  if (r.non_leaf) {
    out.report("non-leaf t=" + label(*p.options.non_leaf_time) + " tv_joint", r.non_leaf->tv_joint,
               "surface t = const is not a leaf; reported only");
  }
}

void run_current_condition(const Scenario& sc, const MultiTimeWaveFunction& psi, const Foliation& F,
                           std::uint64_t seed, Collector& out) {
  const CurrentConditionPlan p = current_condition_plan(Node(sc.config, "")["run"]);
  const int N = sc.particles;
  const auto n = static_cast<std::size_t>(N);
  if (F.kink_count() == 0) throw Error(ErrorCode::Unsupported, "the foliation has no kinks to check");
  auto uniform = [](std::mt19937_64& e, std::pair<double, double> r) { return r.first + (r.second - r.first) * uniform01(e); };

  // Kink points: slot i % N on kink (i / N) % K, other particles off the kink set.
  std::vector<std::string> header{"s", "slot", "kink"};
  for (int j = 1; j <= N; ++j) header.push_back("q_" + std::to_string(j));
  for (const char* c : {"flux_left", "flux_right", "mismatch", "flux_left_aux", "flux_right_aux", "mismatch_aux", "same_sign", "same_sign_aux"})
    header.emplace_back(c);
  CsvWriter cc(header);
  double worst = 0.0;
  double worst_aux = 0.0;
  std::size_t sign_disagreements = 0;
  std::size_t null_flux = 0;
  std::vector<std::pair<double, std::vector<double>>> kink_points;
  for (std::size_t i = 0; i < p.points; ++i) {
    auto e = stream_engine(seed, i);
    const int slot = static_cast<int>(i % n);
    const auto kink = (i / n) % F.kink_count();
    std::vector<double> q(n);
    double s = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      s = uniform(e, p.s_range);
      const double xk = F.kink_position(kink, s);
      for (std::size_t j = 0; j < n; ++j) {
        const double off = uniform(e, p.offset_range) * (uniform01(e) < 0.5 ? -1.0 : 1.0);
        q[j] = static_cast<int>(j) == slot ? xk : xk + off;
      }
      placed = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<int>(j) != slot && F.kink_at(s, q[j], 1e-3) >= 0) placed = false;
      }
    }
    if (!placed) throw Error(ErrorCode::CornerPoint, "could not place a non-corner kink point");
    std::optional<Eigen::MatrixXd> G;
    if (p.aux_product) {
      Eigen::MatrixXd A(N + 1, N + 1);
      for (int a = 0; a <= N; ++a)
        for (int b = 0; b <= N; ++b) A(a, b) = 2.0 * uniform01(e) - 1.0;
      G = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(N + 1, N + 1);
    }
    const auto r = current_condition_check(psi, F, s, q);
    const auto g = G ? current_condition_check(psi, F, s, q, G) : r;
    worst = std::max(worst, r.mismatch);
    worst_aux = std::max(worst_aux, g.mismatch);
    sign_disagreements += r.same_sign != g.same_sign;
    null_flux += r.null_flux;
    std::vector<double> row{s, static_cast<double>(slot + 1), static_cast<double>(kink)};
    row.insert(row.end(), q.begin(), q.end());
    for (double v : {r.flux_left, r.flux_right, r.mismatch, g.flux_left, g.flux_right, g.mismatch,
                     r.same_sign ? 1.0 : 0.0, g.same_sign ? 1.0 : 0.0})
      row.push_back(v);
    cc.row(row);
    if (kink_points.size() < p.side_gap_points) kink_points.emplace_back(s, q);
  }
  out.file("current_condition.csv", cc.str());
  out.check("current_condition max_mismatch", worst, "<", p.tolerance);
  if (p.aux_product) {
    out.check("current_condition max_mismatch_aux_product", worst_aux, "<", p.tolerance);
    out.check("current_condition sign_pattern_changes", static_cast<double>(sign_disagreements), "==", 0.0);
  }
  out.report("current_condition null_flux_points", static_cast<double>(null_flux));

  if (p.pushforward_points > 0) {
    std::vector<std::string> ph{"s"};
    for (int j = 1; j <= N; ++j) ph.push_back("q_" + std::to_string(j));
    ph.emplace_back("residual");
    CsvWriter pf(ph);
    double worst_pf = 0.0;
    for (std::size_t i = 0; i < p.pushforward_points; ++i) {
      auto e = stream_engine(seed ^ 0x9e3779b97f4a7c15ULL, i);
      std::vector<double> q(n);
      double s = 0.0;
      bool off = false;
      while (!off) {
        s = uniform(e, p.s_range);
        for (auto& x : q) x = uniform(e, p.q_range);
        off = std::none_of(q.begin(), q.end(), [&](double x) { return F.kink_at(s, x, 0.05) >= 0; });
      }
      const double res = pushforward_identity_check(psi, F, s, q, smooth_sides(n)).residual;
      worst_pf = std::max(worst_pf, res);
      std::vector<double> row{s};
      row.insert(row.end(), q.begin(), q.end());
      row.push_back(res);
      pf.row(row);
    }
    out.file("pushforward.csv", pf.str());
    out.check("pushforward max_residual", worst_pf, "<", p.pushforward_tolerance);

    // One-sided limits on the kink set: J is a spacetime object, its
    // pushforward depends on the piece.
    const ConfigurationChart chart(F, N);
    double j_gap = 0.0;
    double pushed_gap = std::numeric_limits<double>::infinity();
    double side_residual = 0.0;
    for (const auto& [s, q] : kink_points) {
      const int slot = [&] {
        for (std::size_t j = 0; j < n; ++j)
          if (F.kink_at(s, q[j], 1e-10) >= 0) return static_cast<int>(j);
        return 0;
      }();
      std::vector<Side> left = smooth_sides(n);
      std::vector<Side> right = smooth_sides(n);
      left[static_cast<std::size_t>(slot)] = Side::Left;
      right[static_cast<std::size_t>(slot)] = Side::Right;
      const auto Jl = current_form_J(psi, chart.to_spacetime(s, q, left));
      const auto Jr = current_form_J(psi, chart.to_spacetime(s, q, right));
      const double scale = std::max(Jl.max_abs(), 1e-300);
      for (std::size_t k = 0; k < Jl.values.size(); ++k) j_gap = std::max(j_gap, std::abs(Jl.values[k] - Jr.values[k]) / scale);
      const auto pl = pushforward_identity_check(psi, F, s, q, left);
      const auto pr = pushforward_identity_check(psi, F, s, q, right);
      side_residual = std::max({side_residual, pl.residual, pr.residual});
      double g = 0.0;
      for (std::size_t k = 0; k < pl.pushed.values.size(); ++k) g = std::max(g, std::abs(pl.pushed.values[k] - pr.pushed.values[k]));
      pushed_gap = std::min(pushed_gap, g / std::max(pl.pushed.max_abs(), 1e-300));
    }
    if (!kink_points.empty()) {
      out.check("J side-limit difference", j_gap, "<", p.side_tolerance);
      out.check("pushforward one-sided residual", side_residual, "<", p.pushforward_tolerance);
      out.check("pushforward side-limit gap (min)", pushed_gap, ">", 1e-9, true,
                "the chart coordinate expression of J jumps across the kink");
    }
  }
}

void run_divergence(const Scenario& sc, const MultiTimeWaveFunction& psi, std::uint64_t seed, Collector& out) {
  const DivergencePlan p = divergence_plan(Node(sc.config, "")["run"]);
  const int N = sc.particles;
  const int d = sc.dimension;
  std::vector<std::string> header;
  for (int j = 1; j <= N; ++j) {
    header.push_back("t_" + std::to_string(j));
    for (int a = 1; a <= d; ++a) header.push_back("x" + std::to_string(a) + "_" + std::to_string(j));
  }
  for (int j = 1; j <= N; ++j) header.push_back("residual_" + std::to_string(j));
  CsvWriter csv(header);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.points; ++i) {
    auto e = stream_engine(seed, i);
    std::vector<MinkowskiPoint> cfg;
    std::vector<double> row;
    for (int j = 0; j < N; ++j) {
      MinkowskiPoint x;
      x.dim = d;
      x.t = p.t_range.first + (p.t_range.second - p.t_range.first) * uniform01(e);
      row.push_back(x.t);
      for (int a = 0; a < d; ++a) {
        x.x[static_cast<std::size_t>(a)] = p.x_range.first + (p.x_range.second - p.x_range.first) * uniform01(e);
        row.push_back(x.x[static_cast<std::size_t>(a)]);
      }
      cfg.push_back(x);
    }
    const auto res = check_divergence(psi, cfg, p.h);
    for (double r : res) {
      worst = std::max(worst, r);
      row.push_back(r);
    }
    csv.row(row);
  }
  out.file("divergence.csv", csv.str());
  out.check("divergence max_relative_residual", worst, "<", p.tolerance);
}

json vec4_json(const Vec4& v) { return json(std::vector<double>(v.begin(), v.end())); }

void run_slater(const Scenario& sc, const MultiTimeWaveFunction& psi, std::uint64_t seed, Collector& out) {
  const Node root(sc.config, "");
  const SlaterPlan p = slater_plan(root["run"], root["foliation"]);
  CsvWriter kinks({"trial", "t", "x1", "x2", "x3", "jL0", "jL1", "jL2", "jL3", "jR0", "jR1", "jR2", "jR3",
                   "mismatch_geometric", "mismatch_relative", "nK0", "nK1", "nK2", "nK3", "flux_left_star",
                   "flux_right_star", "sign_left", "sign_right", "hbdm_mismatch"});
  json reports = json::array();
  std::size_t violations = 0;
  std::size_t spacelike = 0;
  std::size_t degenerate_retries = 0;
  std::size_t degenerate_trials = 0;
  double hbdm_worst = 0.0;
  double slater_min_mismatch = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.trials; ++i) {
    auto e = stream_engine(seed, i);
    const auto field = MaxwellField::random(e, p.modes);
    const Wedge3 wedge = p.wedge ? *p.wedge : Wedge3::random(e);
    std::optional<SlaterKinkReport> r;
    for (std::size_t attempt = 0; attempt < p.max_retries && !r; ++attempt) {
      auto coord = [&] { return p.extent * (2.0 * uniform01(e) - 1.0); };
      const double s = coord();
      const double u = coord();
      const auto x = wedge.kink_point(s, u, coord());
      try {
        r = slater_kink_violation(field, wedge, x);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::DegenerateField) throw;
        ++degenerate_retries;
      }
    }
    if (!r) {
      ++degenerate_trials;
      continue;
    }
    const double hbdm = hbdm_kink_check(psi, wedge, r->x).mismatch;
    hbdm_worst = std::max(hbdm_worst, hbdm);
    slater_min_mismatch = std::min(slater_min_mismatch, r->mismatch_relative);
    violations += r->violation;
    spacelike += r->n_k_star_spacelike;
    std::vector<double> row{static_cast<double>(i), r->x.t, r->x.x[0], r->x.x[1], r->x.x[2]};
    row.insert(row.end(), r->j_left.begin(), r->j_left.end());
    row.insert(row.end(), r->j_right.begin(), r->j_right.end());
    row.push_back(r->mismatch_geometric);
    row.push_back(r->mismatch_relative);
    row.insert(row.end(), r->n_k_star.begin(), r->n_k_star.end());
    for (double v : {r->flux_left_star, r->flux_right_star, static_cast<double>(r->sign_left),
                     static_cast<double>(r->sign_right), hbdm})
      row.push_back(v);
    kinks.row(row);
    reports.push_back({{"trial", i},
                       {"x", {r->x.t, r->x.x[0], r->x.x[1], r->x.x[2]}},
                       {"j_L", vec4_json(r->j_left)},
                       {"j_R", vec4_json(r->j_right)},
                       {"mismatch_geometric", r->mismatch_geometric},
                       {"n_K_star", vec4_json(r->n_k_star)},
                       {"sign_left", r->sign_left},
                       {"sign_right", r->sign_right},
                       {"hbdm_mismatch", hbdm}});
  }
  out.file("slater_kinks.csv", kinks.str());

  CsvWriter div({"point", "t", "x1", "x2", "x3", "constant_relative", "rotating_relative", "rotating_divergence"});
  const auto rotating = rotating_boost_field(p.beta0, p.kappa, p.omega);
  double constant_worst = 0.0;
  double rotating_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.divergence_points; ++i) {
    auto e = stream_engine(seed, p.trials + i);
    const auto field = MaxwellField::random(e, p.modes);
    MinkowskiPoint x;
    x.dim = 3;
    x.t = p.extent * (2.0 * uniform01(e) - 1.0);
    for (auto& c : x.x) c = p.extent * (2.0 * uniform01(e) - 1.0);
    const auto c = slater_divergence_check(field, constant_normal_field(rotating(x)), x, p.divergence_h);
    const auto r = slater_divergence_check(field, rotating, x, p.divergence_h);
    constant_worst = std::max(constant_worst, c.relative);
    rotating_min = std::min(rotating_min, r.relative);
    div.row({static_cast<double>(i), x.t, x.x[0], x.x[1], x.x[2], c.relative, r.relative, r.divergence});
  }
  out.file("slater_divergence.csv", div.str());

  const std::size_t valid = p.trials - degenerate_trials;
  json rep;
  rep["trials"] = p.trials;
  rep["valid_trials"] = valid;
  rep["degenerate_retries"] = degenerate_retries;
  rep["violations"] = violations;
  rep["hbdm_max_mismatch"] = hbdm_worst;
  rep["slater_min_relative_mismatch"] = slater_min_mismatch;
  rep["divergence_constant_max"] = constant_worst;
  rep["divergence_rotating_min"] = rotating_min;
  rep["reports"] = std::move(reports);
  out.file("slater_report.json", rep.dump(2) + "\n");

  out.check("slater valid_trials", static_cast<double>(valid), "==", static_cast<double>(p.trials), true,
            "trials where j_L and j_R are not parallel");
  out.check("slater sign_violation_fraction", valid ? static_cast<double>(violations) / static_cast<double>(valid) : 0.0,
            "==", 1.0);
  out.check("slater n_K_star spacelike fraction", valid ? static_cast<double>(spacelike) / static_cast<double>(valid) : 0.0,
            "==", 1.0);
  out.check("slater min relative mismatch (geometric normal)", slater_min_mismatch, ">", p.hbdm_tolerance);
  out.check("hbdm N=1 max mismatch on the same kinks", hbdm_worst, "<", p.hbdm_tolerance);
  out.check("divergence constant n (max)", constant_worst, "<", p.constant_tolerance);
  out.check("divergence rotating n (min)", rotating_min, ">", p.rotating_min);
}

void run_foliation(const Scenario& sc, const Foliation& F, std::uint64_t seed, Collector& out) {
  const Node root(sc.config, "");
  const FoliationPlan p = foliation_plan(root["run"]);
  const auto ex = export_foliation(F, p.s_grid, p.x_grid);
  out.file("leaves.csv", ex.leaves_csv);
  out.file("kinks.csv", ex.kinks_csv);
  json rep;
  rep["kink_count"] = F.kink_count();
  rep["s_grid"] = p.s_grid;
  rep["rapidities"] = json::array();
  double asym = 0.0;
  for (double s : p.s_grid) {
    for (std::size_t k = 0; k < F.kink_count(); ++k) {
      const auto [l, r] = kink_rapidities(F, k, s);
      rep["rapidities"].push_back({{"s", s}, {"kink", k}, {"left", l}, {"right", r}});
      asym = std::max(asym, std::abs(l - r));
    }
  }
  if (F.kink_count() > 0) out.report("kink rapidity asymmetry |left - right| (max)", asym);

  if (const auto* dn0 = dynamic_cast<const Dn0Foliation*>(&F)) {
    const Node f = root["foliation"];
    const Dn0Spec spec = dn0_spec_of(f);
    CsvWriter grid({"s", "x", "height", "slope", "argmax"});
    for (const auto& leaf : dn0->leaves())
      for (std::size_t k = 0; k < dn0->x_grid().size(); ++k)
        grid.row({leaf.s, dn0->x_grid()[k], leaf.height[k], leaf.slope[k], leaf.argmax[k]});
    out.file("dn0_grid.csv", grid.str());
    rep["uniform_kink_count"] = dn0->uniform_kink_count();

    if (p.closed_form_tolerance) {
      const Node init = f["initial"];
      if (init["type"].string() != "wedge" || !(init["a"].number() > 0.0)) {
        config_error(init.path(), "the closed-form check needs a roof (wedge with a > 0)");
      }
      const double a = init["a"].number();
      const double x0 = init.number("apex_x", 0.0);
      const double t0 = init.number("apex_t", 0.0);
      double worst = 0.0;
      for (const auto& leaf : dn0->leaves())
        for (std::size_t k = 0; k < dn0->x_grid().size(); ++k) {
          const double expected = t0 - a * std::abs(dn0->x_grid()[k] - x0) + leaf.s * std::sqrt(1.0 - a * a);
          worst = std::max(worst, std::abs(leaf.height[k] - expected));
        }
      rep["closed_form_max_error"] = worst;
      out.check("dn0 closed-form max error", worst, "<", *p.closed_form_tolerance);
    }
    if (p.distance_points > 0) {
      double worst = 0.0;
      json pts = json::array();
      for (std::size_t i = 0; i < p.distance_points; ++i) {
        auto e = stream_engine(seed, i);
        const double s = dn0->s_min() + (dn0->s_max() - dn0->s_min()) * uniform01(e);
        const double x = dn0->x_grid().front() + (dn0->x_grid().back() - dn0->x_grid().front()) * uniform01(e);
        const double t = dn0->height(s, x);
        const double dist = lorentzian_distance_to_surface(spec.initial, MinkowskiPoint::in_1d(t, x), spec.options.distance);
        worst = std::max(worst, std::abs(dist - s));
        pts.push_back({{"s", s}, {"x", x}, {"t", t}, {"distance", dist}});
      }
      rep["distance_points"] = std::move(pts);
      rep["distance_max_error"] = worst;
      out.check("dn0 distance-on-leaf max error", worst, "<=", p.distance_factor * spec.tolerance);
    }
  }
  out.file("foliation.json", rep.dump(2) + "\n");
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// ------------------------------------------------------------------ public

std::string_view to_string(RunType type) noexcept {
  switch (type) {
    case RunType::Simulate: return "simulate";
    case RunType::Equivariance: return "equivariance";
    case RunType::CheckCurrentCondition: return "check-current-condition";
    case RunType::CheckDivergence: return "check-divergence";
    case RunType::SlaterDemo: return "slater-demo";
    case RunType::FoliationExport: return "foliation-export";
  }
  return "unknown";
}

std::string_view subcommand_name(RunType type) noexcept {
  return type == RunType::FoliationExport ? "foliation" : to_string(type);
}

Scenario parse_scenario(const std::string& text) {
  Scenario sc;
  sc.text = text;
  try {
    sc.config = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset to line and column.
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ConfigError, "syntax error at line " + std::to_string(line) + ", column " +
                                            std::to_string(col) + ": " + e.what());
  }
  const Node root(sc.config, "");
  root.allow({"schema_version", "name", "description", "seed", "dimension", "particles", "foliation",
              "wavefunction", "run", "output"});
  const long long version = root["schema_version"].integer();
  if (version != kSchemaVersion) {
    config_error("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                       std::to_string(kSchemaVersion) + ")");
  }
  sc.name = root["name"].string();
  if (root.has("description")) (void)root["description"].string();
  sc.seed = root["seed"].u64();
  sc.dimension = static_cast<int>(root["dimension"].integer());
  if (sc.dimension != 1 && sc.dimension != 3) config_error("dimension", "expected 1 or 3");
  sc.particles = static_cast<int>(root["particles"].count(1));
  sc.output_dir = root.string("output", "out/" + sc.name);
  const Node run = root["run"];
  sc.run = run_type_of(run["type"]);
  validate(sc);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

MultiTimeWaveFunction build_wavefunction(const Scenario& sc) {
  return wavefunction_of(Node(sc.config, "")["wavefunction"], sc.dimension, sc.particles);
}

std::shared_ptr<const Foliation> build_foliation(const Scenario& sc) {
  return foliation_of(Node(sc.config, "")["foliation"], true);
}

ScenarioResult run_scenario(const Scenario& sc, const RunSettings& settings) {
  ScenarioResult result;
  result.seed = settings.seed.value_or(sc.seed);
  result.output_dir = settings.output_dir.value_or(sc.output_dir);
  const int threads = std::max(1, settings.threads);
  Collector out;

  std::optional<MultiTimeWaveFunction> psi;
  if (needs_wavefunction(sc.run)) psi = build_wavefunction(sc);
  std::shared_ptr<const Foliation> F;
  if (needs_foliation(sc.run) && sc.run != RunType::SlaterDemo) F = build_foliation(sc);

  switch (sc.run) {
    case RunType::Simulate: run_simulate(sc, *psi, *F, result.seed, threads, out); break;
    case RunType::Equivariance: run_equivariance_block(sc, *psi, *F, result.seed, threads, out); break;
    case RunType::CheckCurrentCondition: run_current_condition(sc, *psi, *F, result.seed, out); break;
    case RunType::CheckDivergence: run_divergence(sc, *psi, result.seed, out); break;
    case RunType::SlaterDemo: run_slater(sc, *psi, result.seed, out); break;
    case RunType::FoliationExport: run_foliation(sc, *F, result.seed, out); break;
  }

  result.checks = std::move(out.checks);
  result.passed = std::all_of(result.checks.begin(), result.checks.end(),
                              [](const CheckResult& c) { return !c.gated || c.passed; });

  json manifest;
  manifest["manifest_version"] = 1;
  manifest["scenario"] = {{"name", sc.name},
                          {"run", std::string(to_string(sc.run))},
                          {"hash", "fnv1a64:" + hex64(fnv1a64(sc.text))},
                          {"schema_version", kSchemaVersion}};
  manifest["versions"] = {{"hbdm", HBDM_VERSION},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"boost", BOOST_LIB_VERSION},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  manifest["seed"] = result.seed;
  manifest["outputs"] = json::array();
  for (const auto& f : out.outputs) {
    manifest["outputs"].push_back({{"file", f.name}, {"bytes", f.contents.size()},
                                   {"fnv1a64", hex64(fnv1a64(f.contents))}});
  }
  manifest["checks"] = json::array();
  for (const auto& c : result.checks) {
    json j{{"name", c.name}, {"gated", c.gated}, {"passed", c.passed}, {"value", c.value}};
    if (!c.relation.empty()) {
      j["relation"] = c.relation;
      j["bound"] = c.bound;
    }
    if (!c.detail.empty()) j["detail"] = c.detail;
    manifest["checks"].push_back(std::move(j));
  }
  manifest["passed"] = result.passed;
  result.outputs = std::move(out.outputs);
  result.outputs.push_back({"manifest.json", manifest.dump(2) + "\n"});
  return result;
}

void write_outputs(const ScenarioResult& result) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(result.output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + result.output_dir + "': " + ec.message());
  for (const auto& f : result.outputs) write_text_file((fs::path(result.output_dir) / f.name).string(), f.contents);
}

int exit_status(const ScenarioResult& result) noexcept { return result.passed ? 0 : 1; }

}  // namespace hbdm
