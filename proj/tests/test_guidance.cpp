#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "hbdm/error.hpp"
#include "hbdm/guidance.hpp"

using namespace hbdm;
using hbdm::testing::Rng;

namespace {

const WedgeFoliation& wedge() {
  static const WedgeFoliation F(0.5, 0.0, std::sqrt(0.75));
  return F;
}

Eigen::MatrixXd random_spd(int n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1, 1);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

// Off-kink point: |q_j| > 0.05 for every particle.
std::vector<double> off_kink(Rng& rng, int n) {
  std::vector<double> q;
  for (int j = 0; j < n; ++j) {
    double x = 0.0;
    while (std::abs(x) < 0.05) x = rng.uniform(-3, 3);
    q.push_back(x);
  }
  return q;
}

}  // namespace

TEST_SUITE("guidance") {

TEST_CASE("rest product state stays at rest on any foliation") {
  const auto psi = testing::rest_pair();
  const std::vector<double> q{-0.7, 1.2};
  for (const Foliation* F : {static_cast<const Foliation*>(&wedge())}) {
    const auto v = guidance_velocity(psi, *F, 0.4, q, smooth_sides(2));
    for (const auto& u : v) {
      CHECK(u[0] == 1.0);
      CHECK(std::abs(u[1]) < 1e-14);
    }
    const auto j = chart_current(psi, *F, 0.4, q, smooth_sides(2));
    for (double w : j.velocity()) CHECK(std::abs(w) < 1e-14);
  }
}

TEST_CASE("single-particle velocity does not depend on the foliation") {
  const auto psi = testing::two_mode();
  const WedgeFoliation flat = WedgeFoliation::flat();
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const double x = rng.uniform(-3, 3);
    const double s = rng.uniform(-1, 1);
    const std::vector<double> q{x};
    const double t = wedge().height(s, x);
    const std::vector<MinkowskiPoint> ev{MinkowskiPoint::in_1d(t, x)};
    const auto T = current_tensor(psi, ev);
    const auto v = guidance_velocity(psi, wedge(), s, q, smooth_sides(1));
    CHECK(v[0][1] == doctest::Approx(T.at({1}) / T.at({0})).epsilon(1e-12));
    const auto vf = guidance_velocity(psi, flat, t, q, smooth_sides(1));
    CHECK(vf[0][1] == doctest::Approx(v[0][1]).epsilon(1e-12));
  }
}

TEST_CASE("own normal does not enter a particle's velocity") {
  const auto psi = testing::entangled_pair();
  const std::vector<double> q{-1.1, 0.0};
  const std::vector<Side> left{Side::Smooth, Side::Left};
  const std::vector<Side> right{Side::Smooth, Side::Right};
  const auto vl = guidance_velocity(psi, wedge(), 0.8, q, left);
  const auto vr = guidance_velocity(psi, wedge(), 0.8, q, right);
  CHECK(std::abs(vl[1][1] - vr[1][1]) < 1e-14);
  CHECK(std::abs(vl[0][1] - vr[0][1]) > 1e-3);
  CHECK_THROWS_AS(guidance_velocity(psi, wedge(), 0.8, q, smooth_sides(2)), Error);
}

TEST_CASE("guidance velocities are timelike or lightlike") {
  const auto psi = testing::entangled_pair();
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto q = off_kink(rng, 2);
    for (const auto& v : guidance_velocity(psi, wedge(), rng.uniform(-1, 1), q, smooth_sides(2))) {
      CHECK(std::abs(v[1]) <= 1.0 + 1e-10);
    }
  }
}

TEST_CASE("leaf density on flat leaves is the time component") {
  const auto psi = testing::two_mode();
  const auto flat = WedgeFoliation::flat();
  const std::vector<double> q{0.9};
  const std::vector<MinkowskiPoint> ev{MinkowskiPoint::in_1d(0.3, 0.9)};
  CHECK(rho_sigma(psi, flat, 0.3, q, smooth_sides(1)) ==
        doctest::Approx(current_tensor(psi, ev).at({0})).epsilon(1e-13));
  const auto j = chart_current(psi, flat, 0.3, q, smooth_sides(1));
  const auto v = guidance_velocity(psi, flat, 0.3, q, smooth_sides(1));
  CHECK(j.j0 == doctest::Approx(current_tensor(psi, ev).at({0})).epsilon(1e-13));
  CHECK(j.velocity()[0] == doctest::Approx(v[0][1]).epsilon(1e-13));
}

TEST_CASE("leaf density of a product state factorizes") {
  const auto psi = testing::product_pair();
  const auto& t = psi.terms().front();
  const MultiTimeWaveFunction a(psi.representation(), {1.0}, {ProductTerm{{1, 0}, {t.particles[0]}}});
  const MultiTimeWaveFunction b(psi.representation(), {1.0}, {ProductTerm{{1, 0}, {t.particles[1]}}});
  const std::vector<double> q{-0.6, 1.4};
  const std::vector<double> q0{q[0]};
  const std::vector<double> q1{q[1]};
  const double rho = rho_sigma(psi, wedge(), 0.5, q, smooth_sides(2));
  const double ra = rho_sigma(a, wedge(), 0.5, q0, smooth_sides(1));
  const double rb = rho_sigma(b, wedge(), 0.5, q1, smooth_sides(1));
  CHECK(rho == doctest::Approx(ra * rb).epsilon(1e-12));
}

TEST_CASE("entangled leaf density jumps across a kink") {
  const auto psi = testing::entangled_pair();
  const std::vector<double> q{-1.1, 0.0};
  const std::vector<Side> left{Side::Smooth, Side::Left};
  const std::vector<Side> right{Side::Smooth, Side::Right};
  CHECK(std::abs(rho_sigma(psi, wedge(), 0.8, q, left) - rho_sigma(psi, wedge(), 0.8, q, right)) > 1e-4);
}

TEST_CASE("chart current satisfies the continuity equation off the kink set") {
  const auto psi = testing::entangled_pair();
  const WedgeFoliation F(0.5, 0.3, 1.0);
  Rng rng(9);
  const double h = 1e-3;
  for (int i = 0; i < 30; ++i) {
    const double s = rng.uniform(-1, 1);
    auto q = off_kink(rng, 2);
    for (auto& x : q) x += F.kink_position(0, s);
    const auto pieces = pieces_for_sides(F, s, q, smooth_sides(2));
    auto at = [&](double ss, std::vector<double> qq) {
      return chart_current(psi, place_on_leaf(F, ss, qq, pieces));
    };
    double div = (at(s + h, q).j0 - at(s - h, q).j0) / (2 * h);
    for (std::size_t j = 0; j < 2; ++j) {
      auto qp = q;
      auto qm = q;
      qp[j] += h;
      qm[j] -= h;
      div += (at(s, qp).jvec[j] - at(s, qm).jvec[j]) / (2 * h);
    }
    const auto c = at(s, q);
    const double scale = std::max({std::abs(c.j0), std::abs(c.jvec[0]), std::abs(c.jvec[1])});
    CHECK(std::abs(div) / scale < 1e-5);
  }
}

TEST_CASE("permutation sign") {
  const std::vector<int> a{0, 1, 2};
  const std::vector<int> b{1, 0, 2};
  const std::vector<int> c{2, 0, 1};
  const std::vector<int> d{0, 0, 1};
  CHECK(permutation_sign(a) == 1);
  CHECK(permutation_sign(b) == -1);
  CHECK(permutation_sign(c) == 1);
  CHECK(permutation_sign(d) == 0);
}

TEST_CASE("J of a single rest wave") {
  const auto psi = testing::single_mode(0.0);
  const std::vector<MinkowskiPoint> ev{MinkowskiPoint::in_1d(0.1, 0.2)};
  const auto J = current_form_J(psi, ev);
  const auto T = current_tensor(psi, ev);
  CHECK(std::abs(J.component({0})) < 1e-14);
  CHECK(J.component({1}) == doctest::Approx(T.at({0})));
}

TEST_CASE("J in block ordering equals the product of per-particle contractions") {
  const auto psi = testing::entangled_pair();
  const std::vector<MinkowskiPoint> ev{MinkowskiPoint::in_1d(0.3, -0.5), MinkowskiPoint::in_1d(-0.2, 0.8)};
  const auto T = current_tensor(psi, ev);
  const auto J = current_form_J(T);
  // Two-dimensional Levi-Civita with eps_{01} = +1, applied particle by particle.
  auto eps2 = [](int a, int b) { return a == b ? 0.0 : (a < b ? 1.0 : -1.0); };
  for (int b1 = 0; b1 < 2; ++b1) {
    for (int b2 = 0; b2 < 2; ++b2) {
      double expected = 0.0;
      for (int m1 = 0; m1 < 2; ++m1)
        for (int m2 = 0; m2 < 2; ++m2) expected += T.at({m1, m2}) * eps2(m1, b1) * eps2(m2, b2);
      CHECK(J.component({b1, 2 + b2}) == doctest::Approx(expected).epsilon(1e-13));
      CHECK(J.component({2 + b2, b1}) == doctest::Approx(-expected).epsilon(1e-13));
    }
  }
  CHECK(std::abs(J.component({0, 1})) < 1e-15);
  CHECK(std::abs(J.component({2, 3})) < 1e-15);
}

TEST_CASE("pushforward identity on a flat foliation") {
  const auto psi = testing::two_mode();
  const auto flat = WedgeFoliation::flat();
  const std::vector<double> q{0.4};
  CHECK(pushforward_identity_check(psi, flat, 0.2, q, smooth_sides(1)).residual < 1e-14);
}

TEST_CASE("pushforward identity at random off-kink points of the wedge") {
  const auto psi = testing::entangled_pair();
  Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto q = off_kink(rng, 2);
    worst = std::max(worst,
                     pushforward_identity_check(psi, wedge(), rng.uniform(-1, 1), q, smooth_sides(2)).residual);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("on the kink set J is continuous but its pushforward is not") {
  const auto psi = testing::entangled_pair();
  const std::vector<double> q{0.0, 0.9};
  const std::vector<Side> left{Side::Left, Side::Smooth};
  const std::vector<Side> right{Side::Right, Side::Smooth};
  CHECK_THROWS_AS(pushforward_identity_check(psi, wedge(), 0.5, q, smooth_sides(2)), Error);
  const ConfigurationChart chart(wedge(), 2);
  const auto J_l = current_form_J(psi, chart.to_spacetime(0.5, q, left));
  const auto J_r = current_form_J(psi, chart.to_spacetime(0.5, q, right));
  for (std::size_t i = 0; i < J_l.values.size(); ++i) CHECK(std::abs(J_l.values[i] - J_r.values[i]) < 1e-12);
  const auto p_l = pushforward_identity_check(psi, wedge(), 0.5, q, left);
  const auto p_r = pushforward_identity_check(psi, wedge(), 0.5, q, right);
  CHECK(p_l.residual < 1e-9);
  CHECK(p_r.residual < 1e-9);
  double gap = 0.0;
  for (std::size_t i = 0; i < p_l.pushed.values.size(); ++i)
    gap = std::max(gap, std::abs(p_l.pushed.values[i] - p_r.pushed.values[i]));
  CHECK(gap > 1e-3);
}

TEST_CASE("current condition holds for a product rest state") {
  const auto psi = testing::rest_pair();
  const std::vector<double> q{-0.4, 0.0};
  const auto r = current_condition_check(psi, wedge(), 0.6, q);
  CHECK(r.slot == 1);
  CHECK(r.mismatch < 1e-10);
}

TEST_CASE("current condition holds for an entangled state under any scalar product") {
  const auto psi = testing::entangled_pair();
  const WedgeFoliation F(0.5, 0.25, 1.0);
  Rng rng(21);
  const Eigen::MatrixXd G = random_spd(3, rng);
  for (int i = 0; i < 100; ++i) {
    const double s = rng.uniform(-1, 1);
    const int slot = i % 2;
    std::vector<double> q(2);
    q[static_cast<std::size_t>(slot)] = F.kink_position(0, s);
    double other = 0.0;
    while (std::abs(other) < 0.05) other = rng.uniform(-3, 3);
    q[static_cast<std::size_t>(1 - slot)] = F.kink_position(0, s) + other;
    const auto e = current_condition_check(psi, F, s, q);
    const auto g = current_condition_check(psi, F, s, q, G);
    CHECK(e.slot == slot);
    CHECK(e.mismatch < 1e-9);
    CHECK(g.mismatch < 1e-9);
    CHECK(e.same_sign == g.same_sign);
  }
}

TEST_CASE("current condition checker rejects corners and regular points") {
  const auto psi = testing::entangled_pair();
  const std::vector<double> corner{0.0, 0.0};
  const std::vector<double> regular{0.3, -0.4};
  CHECK_THROWS_AS(current_condition_check(psi, wedge(), 0.2, corner), Error);
  CHECK_THROWS_AS(current_condition_check(psi, wedge(), 0.2, regular), Error);
  try {
    current_condition_check(psi, wedge(), 0.2, corner);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CornerPoint);
  }
}

TEST_CASE("chart inverse recovers the leaf label") {
  const ConfigurationChart chart(wedge(), 1);
  const std::vector<double> q{0.7};
  const auto ev = chart.to_spacetime(0.37, q, smooth_sides(1));
  CHECK(chart.leaf_label(ev[0], -5, 5) == doctest::Approx(0.37).epsilon(1e-11));
}

}  // TEST_SUITE
