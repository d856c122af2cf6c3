#include "hbdm/slater.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "hbdm/error.hpp"

namespace hbdm {

namespace {

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

double unit(std::mt19937_64& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

Vec3 random_direction(std::mt19937_64& engine) {
  const double z = 2.0 * unit(engine) - 1.0;
  const double phi = 2.0 * std::numbers::pi * unit(engine);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Some unit vector orthogonal to e.
Vec3 orthogonal_to(const Vec3& e) {
  const Vec3 trial = std::abs(e[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  Vec3 b = cross(e, trial);
  const double n = norm3(b);
  for (double& c : b) c /= n;
  return b;
}

double pair(const Vec4& n_lower, const Vec4& j_upper) {
  return n_lower[0] * j_upper[0] + n_lower[1] * j_upper[1] + n_lower[2] * j_upper[2] +
         n_lower[3] * j_upper[3];
}

// eta^{mu nu} n_mu n_nu.
double covector_square(const Vec4& n) { return n[0] * n[0] - n[1] * n[1] - n[2] * n[2] - n[3] * n[3]; }

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

// ------------------------------------------------------------------- field

MaxwellField::MaxwellField(std::vector<MaxwellMode> modes) : modes_(std::move(modes)) {
  for (const auto& m : modes_) {
    const double k = norm3(m.k);
    if (!(k > 0.0)) throw Error(ErrorCode::InvalidFamily, "Maxwell mode with zero wave vector");
    if (std::abs(norm3(m.polarization) - 1.0) > 1e-12 ||
        std::abs(dot3(m.polarization, m.k)) > 1e-12 * k) {
      throw Error(ErrorCode::InvalidFamily, "polarization must be a unit vector orthogonal to k");
    }
  }
}

MaxwellField MaxwellField::random(std::mt19937_64& engine, int count) {
  std::vector<MaxwellMode> modes;
  for (int i = 0; i < count; ++i) {
    MaxwellMode m;
    const Vec3 dir = random_direction(engine);
    const double k = 0.5 + 1.5 * unit(engine);
    m.k = {k * dir[0], k * dir[1], k * dir[2]};
    const Vec3 b1 = orthogonal_to(dir);
    const Vec3 b2 = cross(dir, b1);
    const double psi = 2.0 * std::numbers::pi * unit(engine);
    for (int c = 0; c < 3; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      m.polarization[ci] = std::cos(psi) * b1[ci] + std::sin(psi) * b2[ci];
    }
    m.amplitude = 0.5 + unit(engine);
    m.phase = 2.0 * std::numbers::pi * unit(engine);
    modes.push_back(m);
  }
  return MaxwellField(std::move(modes));
}

double MaxwellField::max_wavenumber() const {
  double k = 0.0;
  for (const auto& m : modes_) k = std::max(k, norm3(m.k));
  return k;
}

Vec3 MaxwellField::electric(const MinkowskiPoint& x) const {
  Vec3 E{};
  for (const auto& m : modes_) {
    const double c = m.amplitude * std::cos(dot3(m.k, x.x) - norm3(m.k) * x.t + m.phase);
    for (std::size_t i = 0; i < 3; ++i) E[i] += c * m.polarization[i];
  }
  return E;
}

Vec3 MaxwellField::magnetic(const MinkowskiPoint& x) const {
  Vec3 B{};
  for (const auto& m : modes_) {
    const double k = norm3(m.k);
    const double c = m.amplitude * std::cos(dot3(m.k, x.x) - k * x.t + m.phase);
    const Vec3 khat{m.k[0] / k, m.k[1] / k, m.k[2] / k};
    const Vec3 b = cross(khat, m.polarization);
    for (std::size_t i = 0; i < 3; ++i) B[i] += c * b[i];
  }
  return B;
}

Mat4 MaxwellField::field_strength(const MinkowskiPoint& x) const {
  const Vec3 E = electric(x);
  const Vec3 B = magnetic(x);
  Mat4 F{};
  for (std::size_t i = 0; i < 3; ++i) {
    F[0][i + 1] = E[i];
    F[i + 1][0] = -E[i];
  }
  F[1][2] = -B[2];
  F[2][1] = B[2];
  F[2][3] = -B[0];
  F[3][2] = B[0];
  F[3][1] = -B[1];
  F[1][3] = B[1];
  return F;
}

// ------------------------------------------------------------ stress tensor

double StressTensor::max_abs() const {
  double m = 0.0;
  for (const auto& row : T)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

double StressTensor::symmetry_residual() const {
  double m = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) m = std::max(m, std::abs(T[a][b] - T[b][a]));
  return m;
}

double StressTensor::trace() const { return T[0][0] - T[1][1] - T[2][2] - T[3][3]; }

Vec4 StressTensor::contract(const Vec4& n) const {
  Vec4 j{};
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) j[a] += T[a][b] * n[b];
  return j;
}

StressTensor stress_tensor(const MaxwellField& field, const MinkowskiPoint& x) {
  const Vec3 E = field.electric(x);
  const Vec3 B = field.magnetic(x);
  const double u = 0.5 * (dot3(E, E) + dot3(B, B));
  const Vec3 S = cross(E, B);
  StressTensor out;
  out.T[0][0] = u;
  for (std::size_t i = 0; i < 3; ++i) {
    out.T[0][i + 1] = S[i];
    out.T[i + 1][0] = S[i];
    for (std::size_t j = 0; j < 3; ++j) {
      out.T[i + 1][j + 1] = -E[i] * E[j] - B[i] * B[j] + (i == j ? u : 0.0);
    }
  }
  return out;
}

Vec4 slater_velocity(const MaxwellField& field, const MinkowskiPoint& x, const UnitNormal& n) {
  const StressTensor T = stress_tensor(field, x);
  const Vec4 lower{n.lower(0), n.lower(1), n.lower(2), n.lower(3)};
  const Vec4 j = T.contract(lower);
  if (!(j[0] > 1e-14 * std::max(T.max_abs(), 1e-300)) || T.max_abs() == 0.0) {
    throw Error(ErrorCode::NullCurrent, "T n vanishes");
  }
  return {1.0, j[1] / j[0], j[2] / j[0], j[3] / j[0]};
}

// -------------------------------------------------------------------- wedge

void Wedge3::validate() const {
  if (std::abs(norm3(axis) - 1.0) > 1e-12) throw Error(ErrorCode::InvalidFamily, "wedge axis must be a unit vector");
  if (!(std::abs(a) < 1.0)) throw Error(ErrorCode::InvalidFamily, "wedge slope must satisfy |a| < 1");
  if (!(c - std::abs(a * v) > 0.0)) throw Error(ErrorCode::InvalidFamily, "wedge leaves are not ordered");
}

UnitNormal Wedge3::normal(Side side) const {
  if (side == Side::Smooth) throw Error(ErrorCode::KinkWithoutSide, "kink normal needs a side");
  const double g = side == Side::Left ? a : -a;
  const std::array<double, 3> grad{g * axis[0], g * axis[1], g * axis[2]};
  return graph_normal(grad, side);
}

Vec4 Wedge3::kink_normal() const { return {-v / c, axis[0], axis[1], axis[2]}; }

MinkowskiPoint Wedge3::kink_point(double s, double u, double w) const {
  const Vec3 b1 = orthogonal_to(axis);
  const Vec3 b2 = cross(axis, b1);
  MinkowskiPoint p;
  p.dim = 3;
  p.t = c * s;
  for (std::size_t i = 0; i < 3; ++i) p.x[i] = v * s * axis[i] + u * b1[i] + w * b2[i];
  return p;
}

Wedge3 Wedge3::random(std::mt19937_64& engine) {
  Wedge3 w;
  w.axis = random_direction(engine);
  w.a = 0.1 + 0.7 * unit(engine);
  w.v = -0.5 + unit(engine);
  w.c = 1.0;
  w.validate();
  return w;
}

// ------------------------------------------------------------- kink checks

SideCurrents slater_side_currents(const MaxwellField& field, const Wedge3& wedge,
                                  const MinkowskiPoint& x) {
  const StressTensor T = stress_tensor(field, x);
  auto lower = [](const UnitNormal& n) { return Vec4{n.lower(0), n.lower(1), n.lower(2), n.lower(3)}; };
  return {T.contract(lower(wedge.normal(Side::Left))), T.contract(lower(wedge.normal(Side::Right)))};
}

SlaterKinkReport slater_kink_violation(const MaxwellField& field, const Wedge3& wedge,
                                       const MinkowskiPoint& x) {
  wedge.validate();
  const SideCurrents j = slater_side_currents(field, wedge, x);
  SlaterKinkReport r;
  r.x = x;
  r.j_left = j.left;
  r.j_right = j.right;

  const Eigen::Vector4d jl(j.left.data());
  const Eigen::Vector4d jr(j.right.data());
  const Eigen::Vector4d delta = jl - jr;
  const Eigen::Vector4d sigma = jl + jr;
  const double scale = std::max(jl.cwiseAbs().maxCoeff(), jr.cwiseAbs().maxCoeff());
  if (!(scale > 0.0) || delta.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    throw Error(ErrorCode::DegenerateField, "one-sided currents coincide");
  }
  const Eigen::Vector4d perp = delta - (delta.dot(sigma) / sigma.dot(sigma)) * sigma;
  if (perp.norm() <= 1e-12 * delta.norm()) {
    throw Error(ErrorCode::DegenerateField, "one-sided currents are parallel");
  }

  const Vec4 m = wedge.kink_normal();
  const double ml = pair(m, j.left);
  const double mr = pair(m, j.right);
  r.mismatch_geometric = ml - mr;
  const double big = std::max(std::abs(ml), std::abs(mr));
  r.mismatch_relative = big > 0.0 ? std::abs(ml - mr) / big : 0.0;

  // perp . sigma = 0 puts the two fluxes at +-(perp . delta) / 2. Adding a
  // spacelike direction annihilated by both currents keeps the fluxes and
  // makes the normal spacelike.
  Eigen::Vector4d n = perp;
  Vec4 nv{n[0], n[1], n[2], n[3]};
  if (covector_square(nv) >= 0.0) {
    Eigen::Matrix<double, 2, 4> A;
    A.row(0) = jl.transpose();
    A.row(1) = jr.transpose();
    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(A, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 4, 2> K = svd.matrixV().rightCols<2>();
    const Eigen::Matrix4d eta = Eigen::Vector4d(1, -1, -1, -1).asDiagonal();
    const Eigen::Matrix2d Q = K.transpose() * eta * K;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(Q);
    const Eigen::Vector4d w = K * eig.eigenvectors().col(0);
    double lambda = n.norm();
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector4d trial = n + lambda * w;
      if (covector_square({trial[0], trial[1], trial[2], trial[3]}) < 0.0) {
        n = trial;
        break;
      }
      lambda *= 2.0;
    }
  }
  n /= n.norm();
  r.n_k_star = {n[0], n[1], n[2], n[3]};
  r.n_k_star_spacelike = covector_square(r.n_k_star) < 0.0;
  r.flux_left_star = pair(r.n_k_star, j.left);
  r.flux_right_star = pair(r.n_k_star, j.right);
  r.sign_left = sign_of(r.flux_left_star);
  r.sign_right = sign_of(r.flux_right_star);
  r.violation = r.sign_left != 0 && r.sign_right != 0 && r.sign_left != r.sign_right;
  return r;
}

CurrentConditionReport hbdm_kink_check(const MultiTimeWaveFunction& psi, const Wedge3& wedge,
                                       const MinkowskiPoint& x) {
  if (psi.spatial_dim() != 3 || psi.particle_count() != 1) {
    throw Error(ErrorCode::Unsupported, "the contrast check takes a single d = 3 Dirac particle");
  }
  wedge.validate();
  const std::vector<MinkowskiPoint> cfg{x};
  const CurrentTensor T = current_tensor(psi, cfg);
  // With one particle no other normal enters the guidance vector, so both
  // sides see the same current.
  auto side_current = [&](Side) {
    ChartCurrent c;
    c.s = x.t;
    c.q = {x.x[0], x.x[1], x.x[2]};
    c.j0 = T.at({0});
    c.jvec = {T.at({1}), T.at({2}), T.at({3})};
    return c;
  };
  const Vec4 m = wedge.kink_normal();
  return compare_fluxes(side_current(Side::Left), side_current(Side::Right),
                        std::vector<double>(m.begin(), m.end()));
}

// --------------------------------------------------------------- divergence

NormalField rotating_boost_field(double beta0, double kappa, double omega) {
  return [=](const MinkowskiPoint& x) {
    const double beta = beta0 + kappa * x.x[0];
    const double phi = omega * x.x[1];
    return Vec4{std::cosh(beta), -std::sinh(beta) * std::cos(phi), -std::sinh(beta) * std::sin(phi), 0.0};
  };
}

NormalField constant_normal_field(const Vec4& n_lower) {
  return [=](const MinkowskiPoint&) { return n_lower; };
}

DivergenceReport slater_divergence_check(const MaxwellField& field, const NormalField& n,
                                         const MinkowskiPoint& x, double h) {
  auto j = [&](const MinkowskiPoint& p) { return stress_tensor(field, p).contract(n(p)); };
  DivergenceReport r;
  for (int mu = 0; mu < 4; ++mu) {
    MinkowskiPoint plus = x;
    MinkowskiPoint minus = x;
    if (mu == 0) {
      plus.t += h;
      minus.t -= h;
    } else {
      plus.x[static_cast<std::size_t>(mu - 1)] += h;
      minus.x[static_cast<std::size_t>(mu - 1)] -= h;
    }
    r.divergence += (j(plus)[static_cast<std::size_t>(mu)] - j(minus)[static_cast<std::size_t>(mu)]) / (2.0 * h);
  }
  r.scale = stress_tensor(field, x).max_abs() * field.max_wavenumber();
  r.relative = r.scale > 0.0 ? std::abs(r.divergence) / r.scale : 0.0;
  return r;
}

}  // namespace hbdm
