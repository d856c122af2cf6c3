#include <doctest.h>

#include <cmath>
#include <random>

#include "hbdm/error.hpp"
#include "hbdm/slater.hpp"

using namespace hbdm;

namespace {

constexpr double kEta[4] = {1.0, -1.0, -1.0, -1.0};

// T^{ab} = g^{am} F_{ml} F^{lb} + 1/4 g^{ab} F_{ml} F^{ml}, built from the
// covariant field strength alone.
Mat4 stress_from_field_strength(const Mat4& F) {
  Mat4 Fup{};  // F^{ab}
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) Fup[a][b] = kEta[a] * kEta[b] * F[a][b];
  double invariant = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) invariant += F[a][b] * Fup[a][b];
  Mat4 T{};
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      double s = 0.0;
      for (std::size_t l = 0; l < 4; ++l) s += kEta[a] * F[a][l] * Fup[l][b];
      T[a][b] = s + (a == b ? 0.25 * kEta[a] * invariant : 0.0);
    }
  }
  return T;
}

MinkowskiPoint random_point(std::mt19937_64& e) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  return MinkowskiPoint{u(e), {u(e), u(e), u(e)}, 3};
}

MultiTimeWaveFunction dirac_d3() {
  const auto rep = DiracRepresentation::chiral(3);
  PlaneWaveMode a;
  a.k = {0.3, -0.4, 0.8};
  PlaneWaveMode b;
  b.k = {-0.6, 0.1, 0.2};
  b.spin = 1;
  b.amplitude = {0.4, 0.3};
  return MultiTimeWaveFunction(rep, {1.0}, {ProductTerm{{1, 0}, {{a, b}}}});
}

}  // namespace

TEST_SUITE("slater") {

TEST_CASE("stress tensor matches the field-strength formula") {
  std::mt19937_64 e(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto field = MaxwellField::random(e, 4);
    const auto x = random_point(e);
    const auto T = stress_tensor(field, x);
    const auto oracle = stress_from_field_strength(field.field_strength(x));
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) CHECK(T.T[a][b] == doctest::Approx(oracle[a][b]).epsilon(1e-12).scale(1.0));
    CHECK(T.symmetry_residual() < 1e-14);
    CHECK(std::abs(T.trace()) < 1e-12);
    CHECK(T.T[0][0] >= 0.0);
  }
}

TEST_CASE("stress tensor is conserved") {
  std::mt19937_64 e(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto field = MaxwellField::random(e, 5);
    const auto x = random_point(e);
    for (std::size_t nu = 0; nu < 4; ++nu) {
      Vec4 n{};
      n[nu] = 1.0;
      const auto r = slater_divergence_check(field, constant_normal_field(n), x, 1e-4);
      CHECK(r.relative < 1e-6);
    }
  }
}

TEST_CASE("plane wave moves at light speed along k") {
  MaxwellMode m;
  m.k = {0.0, 0.6, 0.8};
  m.polarization = {1.0, 0.0, 0.0};
  const MaxwellField field({m});
  const MinkowskiPoint x{0.3, {0.1, 0.2, 0.05}, 3};
  const auto v = slater_velocity(field, x, UnitNormal{{1.0, 0.0, 0.0, 0.0}, 3});
  CHECK(v[1] == doctest::Approx(0.0).scale(1.0));
  CHECK(v[2] == doctest::Approx(0.6));
  CHECK(v[3] == doctest::Approx(0.8));
}

TEST_CASE("rest-frame normal picks the T^{mu 0} column") {
  std::mt19937_64 e(13);
  const auto field = MaxwellField::random(e, 3);
  const auto x = random_point(e);
  const auto T = stress_tensor(field, x);
  const auto j = T.contract({1.0, 0.0, 0.0, 0.0});
  for (std::size_t mu = 0; mu < 4; ++mu) CHECK(j[mu] == T.T[mu][0]);
}

TEST_CASE("vanishing field has no velocity") {
  const MaxwellField field({});
  const MinkowskiPoint x{0.0, {0.0, 0.0, 0.0}, 3};
  CHECK(stress_tensor(field, x).max_abs() == 0.0);
  CHECK_THROWS_AS(slater_velocity(field, x, UnitNormal{{1.0, 0.0, 0.0, 0.0}, 3}), Error);
  CHECK(slater_divergence_check(field, rotating_boost_field(0.3, 0.2, 0.4), x, 1e-3).relative == 0.0);
}

TEST_CASE("invalid modes and wedges are rejected") {
  MaxwellMode m;
  m.polarization = {0.0, 0.0, 1.0};  // parallel to k
  CHECK_THROWS_AS(MaxwellField({m}), Error);
  Wedge3 w;
  w.a = 1.0;
  CHECK_THROWS_AS(w.validate(), Error);
  w.a = 0.5;
  w.axis = {1.0, 1.0, 0.0};
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("current condition fails at wedge kinks for random fields") {
  std::mt19937_64 e(14);
  int violations = 0;
  int spacelike = 0;
  double max_hbdm = 0.0;
  const auto psi = dirac_d3();
  for (int trial = 0; trial < 100; ++trial) {
    const auto field = MaxwellField::random(e, 3);
    const auto wedge = Wedge3::random(e);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const auto x = wedge.kink_point(u(e), u(e), u(e));
    const auto r = slater_kink_violation(field, wedge, x);
    violations += r.violation ? 1 : 0;
    spacelike += r.n_k_star_spacelike ? 1 : 0;
    CHECK(r.flux_left_star > 0.0);
    CHECK(r.flux_right_star < 0.0);
    CHECK(r.mismatch_relative > 1e-6);
    max_hbdm = std::max(max_hbdm, hbdm_kink_check(psi, wedge, x).mismatch);
  }
  CHECK(violations == 100);
  CHECK(spacelike == 100);
  CHECK(max_hbdm < 1e-9);
}

TEST_CASE("flat wedge has matching currents") {
  std::mt19937_64 e(15);
  const auto field = MaxwellField::random(e, 3);
  Wedge3 w;
  w.a = 0.0;
  const auto x = w.kink_point(0.4, 0.3, -0.2);
  const auto j = slater_side_currents(field, w, x);
  for (std::size_t mu = 0; mu < 4; ++mu) CHECK(j.left[mu] == j.right[mu]);
  CHECK_THROWS_AS(slater_kink_violation(field, w, x), Error);
}

TEST_CASE("single plane wave is degenerate") {
  MaxwellMode m;
  m.k = {0.3, 0.0, 0.4};
  m.polarization = {0.0, 1.0, 0.0};
  const MaxwellField field({m});
  Wedge3 w;
  w.a = 0.5;
  w.v = 0.2;
  const auto x = w.kink_point(0.1, 0.2, 0.7);
  const auto j = slater_side_currents(field, w, x);
  CHECK(std::abs(j.left[0] - j.right[0]) > 1e-3);
  try {
    (void)slater_kink_violation(field, w, x);
    FAIL("expected DegenerateField");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::DegenerateField);
  }
}

TEST_CASE("non-constant normal field breaks conservation of T n") {
  std::mt19937_64 e(16);
  const double beta0 = 0.5, kappa = 1.0, omega = 1.0;
  const auto n = rotating_boost_field(beta0, kappa, omega);
  for (int trial = 0; trial < 100; ++trial) {
    const auto field = MaxwellField::random(e, 4);
    const auto x = random_point(e);
    const auto r = slater_divergence_check(field, n, x, 1e-4);
    // d_mu (T^{mu nu} n_nu) = T^{mu nu} d_mu n_nu, derivatives along x_1 and x_2 only.
    const double beta = beta0 + kappa * x.x[0];
    const double phi = omega * x.x[1];
    const Vec4 d1{kappa * std::sinh(beta), -kappa * std::cosh(beta) * std::cos(phi),
                  -kappa * std::cosh(beta) * std::sin(phi), 0.0};
    const Vec4 d2{0.0, omega * std::sinh(beta) * std::sin(phi), -omega * std::sinh(beta) * std::cos(phi), 0.0};
    const auto T = stress_tensor(field, x);
    double oracle = 0.0;
    for (std::size_t nu = 0; nu < 4; ++nu) oracle += T.T[1][nu] * d1[nu] + T.T[2][nu] * d2[nu];
    CHECK(r.divergence == doctest::Approx(oracle).epsilon(1e-6).scale(r.scale));
    CHECK(r.relative > 1e-3);
  }
}

}  // TEST_SUITE
