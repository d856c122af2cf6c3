#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "hbdm/error.hpp"
#include "hbdm/geometry.hpp"

using namespace hbdm;

namespace {

// Level-set height by brute-force minimization of f0(u) + sqrt(s^2 + (x-u)^2).
double envelope_height(const LeafWithKinks& f0, double s, double x) {
  double best = 1e300;
  double best_u = 0.0;
  const double span = 6.0 * s + 6.0;
  const int n = 20000;
  for (int i = 0; i <= n; ++i) {
    const double u = x - span + 2.0 * span * i / n;
    const double v = f0.height(u) + std::hypot(s, x - u);
    if (v < best) { best = v; best_u = u; }
  }
  double lo = best_u - 2.0 * span / n;
  double hi = best_u + 2.0 * span / n;
  auto g = [&](double u) { return f0.height(u) + std::hypot(s, x - u); };
  for (int i = 0; i < 200; ++i) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (g(m1) < g(m2)) hi = m2; else lo = m1;
  }
  return std::min(best, g(0.5 * (lo + hi)));
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("minkowski interval is boost invariant") {
  const auto p = MinkowskiPoint::in_1d(1.3, 0.4);
  const auto q = MinkowskiPoint::in_1d(-0.2, 0.9);
  const double before = minkowski_square(p, q);
  const double after = minkowski_square(boost(p, 0.7), boost(q, 0.7));
  CHECK(after == doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("graph normal is future unit timelike") {
  for (double f1 : {-0.9, -0.3, 0.0, 0.5, 0.95}) {
    const std::array<double, 1> g{f1};
    const auto n = graph_normal(g);
    CHECK(n.norm_squared() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(n.upper[0] > 0.0);
    CHECK(n.upper[1] == doctest::Approx(f1 / std::sqrt(1 - f1 * f1)));
  }
}

TEST_CASE("wedge leaf needs a side tag at its apex") {
  const auto leaf = LeafWithKinks::wedge(0.5, 0.0, 1.0);
  CHECK(leaf.height(2.0) == doctest::Approx(0.0));
  CHECK(leaf.is_kink(0.0));
  CHECK_THROWS_AS(leaf.slope(0.0), Error);
  CHECK(leaf.slope(0.0, Side::Left) == doctest::Approx(0.5));
  CHECK(leaf.slope(0.0, Side::Right) == doctest::Approx(-0.5));
  const auto [l, r] = leaf.one_sided_slopes(0);
  CHECK(l == doctest::Approx(0.5));
  CHECK(r == doctest::Approx(-0.5));
  CHECK_NOTHROW(leaf.check_spacelike(-5, 5));
}

TEST_CASE("steep leaf violates the spacelike margin") {
  CHECK_THROWS_AS(LeafWithKinks::wedge(0.99, 0.0, 0.0), Error);
  const LeafWithKinks steep([](double x) { return 0.99 * x; }, [](double, Side) { return 0.99; }, {});
  CHECK_THROWS_AS(steep.check_spacelike(-1, 1), Error);
}

TEST_CASE("wedge foliation matches its formula and derivatives") {
  const WedgeFoliation F(0.5, 0.2, std::sqrt(0.75));
  CHECK(F.kink_count() == 1);
  testing::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double s = rng.uniform(-2, 2);
    const double x = rng.uniform(-3, 3);
    const double expected = std::sqrt(0.75) * s - 0.5 * std::abs(x - 0.2 * s);
    CHECK(F.height(s, x) == doctest::Approx(expected).epsilon(1e-14));
    const int p = F.piece_of(s, x);
    const double h = 1e-6;
    const double ds = (F.height(s + h, x, p) - F.height(s - h, x, p)) / (2 * h);
    const double dx = (F.height(s, x + h, p) - F.height(s, x - h, p)) / (2 * h);
    CHECK(F.lapse(s, x, p) == doctest::Approx(ds).epsilon(1e-8));
    CHECK(F.slope(s, x, p) == doctest::Approx(dx).epsilon(1e-8));
  }
  CHECK(F.kink_position(0, 2.0) == doctest::Approx(0.4));
}

TEST_CASE("wedge family validation") {
  CHECK_THROWS_AS(WedgeFoliation(0.995, 0.0, 1.0), Error);
  CHECK_THROWS_AS(WedgeFoliation(0.5, 2.0, 0.9), Error);
  CHECK(WedgeFoliation(0.0, 0.0, 1.0).kink_count() == 0);
}

TEST_CASE("piece selection on a kink requires a side") {
  const WedgeFoliation F(0.5, 0.0, 1.0);
  CHECK(F.piece_for(1.0, -1.0, Side::Smooth) == 0);
  CHECK(F.piece_for(1.0, 1.0, Side::Smooth) == 1);
  CHECK(F.piece_for(1.0, 0.0, Side::Left) == 0);
  CHECK(F.piece_for(1.0, 0.0, Side::Right) == 1);
  CHECK_THROWS_AS(F.piece_for(1.0, 0.0, Side::Smooth), Error);
  CHECK(F.kink_at(1.0, 0.0) == 0);
  CHECK(F.kink_at(1.0, 0.1) == -1);
}

TEST_CASE("kink rapidities of a symmetric static wedge agree") {
  const WedgeFoliation F(0.5, 0.0, std::sqrt(0.75));
  const auto [l, r] = kink_rapidities(F, 0, 1.0);
  CHECK(l == doctest::Approx(r).epsilon(1e-14));
  CHECK(l == doctest::Approx(std::atanh(0.5)).epsilon(1e-12));
}

TEST_CASE("proper time maximum from a flat surface is the height") {
  const auto flat = LeafWithKinks::flat(0.0);
  const auto p = MinkowskiPoint::in_1d(1.5, 0.3);
  const auto m = maximize_proper_time(flat, p, -1e9, 1e9);
  CHECK(m.tau == doctest::Approx(1.5).epsilon(1e-12));
  // tau is quadratic at its maximum, so the abscissa is only good to ~sqrt(eps).
  CHECK(std::abs(m.argmax - 0.3) < 1e-6);
  CHECK_THROWS_AS(lorentzian_distance_to_surface(flat, MinkowskiPoint::in_1d(-1.0, 0.0)), Error);
}

TEST_CASE("dn0 leaves of a roof reproduce the closed form") {
  const double a = 0.5;
  const auto roof = LeafWithKinks::wedge(a, 0.0, 0.0);
  std::vector<double> s_grid{0.5, 1.0, 1.5};
  std::vector<double> x_grid;
  // The maximizer jumps by 2 a s / sqrt(1 - a^2) at the kink; the grid must
  // resolve that as more than ten cells.
  for (int i = 0; i <= 100; ++i) x_grid.push_back(-2.0 + 0.04 * i);
  const auto F = build_dn0_foliation(roof, s_grid, x_grid, 1e-11);
  REQUIRE(F->kink_count() == 1);
  for (const auto& leaf : F->leaves()) {
    for (std::size_t k = 0; k < x_grid.size(); ++k) {
      const double expected = -a * std::abs(x_grid[k]) + leaf.s * std::sqrt(1 - a * a);
      CHECK(leaf.height[k] == doctest::Approx(expected).epsilon(0).scale(1).epsilon(1e-8));
    }
    REQUIRE(leaf.kinks.size() == 1);
    CHECK(std::abs(leaf.kinks[0].x) < 1e-8);
    CHECK(std::abs(leaf.kinks[0].slope_left - a) < 1e-6);
    CHECK(std::abs(leaf.kinks[0].slope_right + a) < 1e-6);
  }
  // Pointwise queries agree with the equivalent wedge foliation.
  const WedgeFoliation W(a, 0.0, std::sqrt(1 - a * a));
  for (double s : {0.7, 1.2}) {
    for (double x : {-1.3, -0.2, 0.4, 1.7}) {
      const int p = W.piece_of(s, x);
      CHECK(std::abs(F->height(s, x, p) - W.height(s, x, p)) < 1e-8);
      // Slopes come from the maximizer, which is only located to ~sqrt(eps).
      CHECK(std::abs(F->slope(s, x, p) - W.slope(s, x, p)) < 1e-6);
      CHECK(std::abs(F->lapse(s, x, p) - W.lapse(s, x, p)) < 1e-6);
    }
  }
  const auto [l, r] = kink_rapidities(*F, 0, 1.0);
  CHECK(l == doctest::Approx(r).epsilon(1e-6));
}

TEST_CASE("dn0 leaves of a smooth bump match the envelope oracle") {
  const auto bump = LeafWithKinks::bump(0.4, 1.0, 0.0);
  std::vector<double> x_grid;
  for (int i = 0; i <= 30; ++i) x_grid.push_back(-3.0 + 0.2 * i);
  const auto F = build_dn0_foliation(bump, {0.3, 0.8}, x_grid, 1e-11);
  for (const auto& leaf : F->leaves()) {
    for (std::size_t k = 0; k < x_grid.size(); k += 3) {
      CHECK(std::abs(leaf.height[k] - envelope_height(bump, leaf.s, x_grid[k])) < 1e-8);
    }
  }
}

TEST_CASE("dn0 leaf points sit at the requested distance") {
  const auto roof = LeafWithKinks::wedge(0.3, 0.0, 0.0);
  std::vector<double> x_grid;
  for (int i = 0; i <= 20; ++i) x_grid.push_back(-1.0 + 0.1 * i);
  const double tol = 1e-10;
  const auto F = build_dn0_foliation(roof, {1.0}, x_grid, tol);
  const auto& leaf = F->leaves().front();
  for (std::size_t k = 0; k < x_grid.size(); ++k) {
    const double d = lorentzian_distance_to_surface(
        roof, MinkowskiPoint::in_1d(leaf.height[k], x_grid[k]));
    CHECK(std::abs(d - 1.0) <= 2.0 * tol);
  }
}

TEST_CASE("valley initial surface gives smooth dn0 leaves") {
  const auto valley = LeafWithKinks::wedge(-0.4, 0.0, 0.0);
  std::vector<double> x_grid;
  for (int i = 0; i <= 20; ++i) x_grid.push_back(-1.0 + 0.1 * i);
  const auto F = build_dn0_foliation(valley, {0.5}, x_grid, 1e-10);
  CHECK(F->kink_count() == 0);
}

TEST_CASE("foliation export lists kink rows") {
  const WedgeFoliation F(0.5, 0.0, 1.0);
  const std::vector<double> s{0.0, 1.0};
  const std::vector<double> x{-1.0, 1.0};
  const auto out = export_foliation(F, s, x);
  CHECK(out.leaves_csv.rfind("s,x,f,is_kink\n", 0) == 0);
  CHECK(out.kinks_csv.rfind("s,x_kink,rapidity_left,rapidity_right\n", 0) == 0);
  int lines = 0;
  for (char c : out.leaves_csv) lines += c == '\n';
  CHECK(lines == 1 + 2 * 3);
}

}  // TEST_SUITE
