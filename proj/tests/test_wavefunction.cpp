#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "hbdm/error.hpp"
#include "hbdm/wavefunction.hpp"

using namespace hbdm;
using hbdm::testing::Rng;

TEST_SUITE("wavefunction") {

TEST_CASE("representations satisfy the Clifford algebra") {
  for (int d : {1, 3}) {
    for (const char* name : {"dirac", "chiral"}) {
      const auto rep = DiracRepresentation::by_name(name, d);
      CHECK(rep.clifford_residual() < 1e-14);
      CHECK(rep.hermiticity_residual() < 1e-14);
      CHECK(rep.spinor_dim() == (d == 1 ? 2 : 4));
    }
  }
  CHECK_THROWS_AS(DiracRepresentation::by_name("majorana", 1), Error);
}

TEST_CASE("plane-wave spinors solve the momentum-space equation") {
  for (int d : {1, 3}) {
    const auto rep = DiracRepresentation::standard(d);
    for (int sign : {+1, -1}) {
      PlaneWaveMode m;
      m.k = {0.7, d == 3 ? -0.2 : 0.0, d == 3 ? 1.1 : 0.0};
      m.energy_sign = sign;
      const auto u = plane_wave_spinor(rep, 1.3, m);
      CHECK(u.norm() == doctest::Approx(1.0));
      CHECK(momentum_space_residual(rep, 1.3, m, u) < 1e-12);
    }
  }
}

TEST_CASE("single plane-wave current points along the group velocity") {
  const double k = 0.7;
  const double m = 1.0;
  const auto psi = testing::single_mode(k, m);
  const std::vector<MinkowskiPoint> x{MinkowskiPoint::in_1d(0.3, -1.2)};
  const auto T = current_tensor(psi, x);
  const double E = std::sqrt(k * k + m * m);
  CHECK(T.at({1}) / T.at({0}) == doctest::Approx(k / E).epsilon(1e-13));
  CHECK(T.at({0}) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("rest plane wave has constant density") {
  const auto psi = testing::single_mode(0.0);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const std::vector<MinkowskiPoint> x{MinkowskiPoint::in_1d(rng.uniform(-3, 3), rng.uniform(-3, 3))};
    const auto T = current_tensor(psi, x);
    CHECK(T.at({0}) == doctest::Approx(1.0));
    CHECK(std::abs(T.at({1})) < 1e-14);
  }
}

TEST_CASE("current tensor of a product state factorizes") {
  const auto psi = testing::product_pair();
  const std::vector<MinkowskiPoint> cfg{MinkowskiPoint::in_1d(0.2, 0.5), MinkowskiPoint::in_1d(-0.4, 1.1)};
  const auto T = current_tensor(psi, cfg);
  const auto& t = psi.terms().front();
  const MultiTimeWaveFunction a(psi.representation(), {1.0}, {ProductTerm{{1, 0}, {t.particles[0]}}});
  const MultiTimeWaveFunction b(psi.representation(), {1.0}, {ProductTerm{{1, 0}, {t.particles[1]}}});
  const std::vector<MinkowskiPoint> c0{cfg[0]};
  const std::vector<MinkowskiPoint> c1{cfg[1]};
  const auto Ta = current_tensor(a, c0);
  const auto Tb = current_tensor(b, c1);
  for (int mu = 0; mu < 2; ++mu) {
    for (int nu = 0; nu < 2; ++nu) {
      CHECK(T.at({mu, nu}) == doctest::Approx(Ta.at({mu}) * Tb.at({nu})).epsilon(1e-12));
    }
  }
}

TEST_CASE("current tensor is independent of the gamma representation") {
  const auto std_psi = testing::entangled_pair(DiracRepresentation::standard(1));
  const auto chi_psi = testing::entangled_pair(DiracRepresentation::chiral(1));
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const std::vector<MinkowskiPoint> cfg{MinkowskiPoint::in_1d(rng.uniform(-1, 1), rng.uniform(-3, 3)),
                                          MinkowskiPoint::in_1d(rng.uniform(-1, 1), rng.uniform(-3, 3))};
    const auto a = current_tensor(std_psi, cfg);
    const auto b = current_tensor(chi_psi, cfg);
    for (std::size_t c = 0; c < a.components.size(); ++c) {
      CHECK(a.components[c] == doctest::Approx(b.components[c]).epsilon(1e-10).scale(a.max_abs()));
    }
  }
}

TEST_CASE("fully contracted current with timelike covectors is nonnegative") {
  const auto psi = testing::entangled_pair();
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<MinkowskiPoint> cfg{MinkowskiPoint::in_1d(rng.uniform(-1, 1), rng.uniform(-3, 3)),
                                          MinkowskiPoint::in_1d(rng.uniform(-1, 1), rng.uniform(-3, 3))};
    const auto T = current_tensor(psi, cfg);
    std::vector<std::array<double, 4>> n;
    for (int j = 0; j < 2; ++j) {
      const double r = rng.uniform(-1.5, 1.5);
      n.push_back({std::cosh(r), -std::sinh(r), 0, 0});
    }
    CHECK(T.contract_all(n) >= -1e-12);
  }
}

TEST_CASE("divergence vanishes for exact solutions") {
  const std::vector<MultiTimeWaveFunction> cases{testing::single_mode(), testing::two_mode(),
                                                 testing::entangled_pair()};
  Rng rng(5);
  for (const auto& psi : cases) {
    for (int i = 0; i < 10; ++i) {
      std::vector<MinkowskiPoint> cfg;
      for (int j = 0; j < psi.particle_count(); ++j) {
        cfg.push_back(MinkowskiPoint::in_1d(rng.uniform(-2, 2), rng.uniform(-5, 5)));
      }
      for (double r : check_divergence(psi, cfg, 1e-3)) CHECK(r < 1e-6);
    }
  }
}

TEST_CASE("divergence check detects a non-conserved field") {
  CurrentField bad = [](std::span<const MinkowskiPoint> cfg) {
    CurrentTensor T;
    T.components = {1.0 + cfg[0].t * cfg[0].t, 0.0};
    return T;
  };
  const std::vector<MinkowskiPoint> cfg{MinkowskiPoint::in_1d(1.0, 0.0)};
  CHECK(check_divergence(bad, cfg, 1e-3)[0] > 0.5);
}

TEST_CASE("gaussian packet density is periodic and peaked at its centre") {
  auto modes = gaussian_packet_modes(1.0, 0.0, 1.0, 30.0);
  const MultiTimeWaveFunction psi(DiracRepresentation::standard(1), {1.0},
                                  {ProductTerm{{1, 0}, {modes}}});
  auto rho = [&](double x) {
    const std::vector<MinkowskiPoint> c{MinkowskiPoint::in_1d(0.0, x)};
    return current_tensor(psi, c).at({0});
  };
  CHECK(rho(1.0) > 10.0 * rho(4.0));
  CHECK(rho(2.5) == doctest::Approx(rho(32.5)).epsilon(1e-9));
  CHECK(rho(0.0) == doctest::Approx(rho(2.0)).epsilon(1e-6));
}

TEST_CASE("d = 3 current is real and conserved") {
  const auto rep = DiracRepresentation::chiral(3);
  PlaneWaveMode a;
  a.k = {0.3, -0.4, 0.8};
  PlaneWaveMode b;
  b.k = {-0.6, 0.1, 0.2};
  b.spin = 1;
  b.amplitude = {0.4, 0.3};
  const MultiTimeWaveFunction psi(rep, {1.0}, {ProductTerm{{1, 0}, {{a, b}}}});
  MinkowskiPoint p{0.2, {0.1, -0.7, 1.4}, 3};
  const std::vector<MinkowskiPoint> cfg{p};
  CHECK(check_divergence(psi, cfg, 1e-3)[0] < 1e-6);
  const auto T = current_tensor(psi, cfg);
  double space = 0.0;
  for (int i = 1; i <= 3; ++i) space += T.at({i}) * T.at({i});
  CHECK(T.at({0}) >= std::sqrt(space) - 1e-12);
}

}  // TEST_SUITE
