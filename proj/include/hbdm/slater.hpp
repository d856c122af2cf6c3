#pragma once

// Generalized Slater guidance for one photon: a classical Maxwell field,
// its stress-energy tensor, the current j = T n for a leaf normal n, and the
// failure of the current condition at kinks of a 3+1 dimensional wedge.

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hbdm/geometry.hpp"
#include "hbdm/guidance.hpp"
#include "hbdm/wavefunction.hpp"

namespace hbdm {

using Vec3 = std::array<double, 3>;
using Vec4 = std::array<double, 4>;
using Mat4 = std::array<std::array<double, 4>, 4>;

/// E = amplitude * polarization * cos(k.x - |k| t + phase), B = k_hat x E.
struct MaxwellMode {
  Vec3 k{0.0, 0.0, 1.0};
  Vec3 polarization{1.0, 0.0, 0.0};
  double amplitude = 1.0;
  double phase = 0.0;
};

class MaxwellField {
 public:
  /// Throws InvalidFamily unless every polarization is a unit vector
  /// orthogonal to a nonzero k.
  explicit MaxwellField(std::vector<MaxwellMode> modes);

  /// `count` modes with random directions, |k| in [0.5, 2], random
  /// transverse polarizations, amplitudes in [0.5, 1.5] and phases.
  static MaxwellField random(std::mt19937_64& engine, int count);

  const std::vector<MaxwellMode>& modes() const { return modes_; }
  double max_wavenumber() const;

  Vec3 electric(const MinkowskiPoint& x) const;
  Vec3 magnetic(const MinkowskiPoint& x) const;
  /// F_{mu nu}, indices down, signature (+,-,-,-): F_{0i} = E_i, F_{ij} = -eps_{ijk} B_k.
  Mat4 field_strength(const MinkowskiPoint& x) const;

 private:
  std::vector<MaxwellMode> modes_;
};

/// T^{mu nu} with both indices up.
struct StressTensor {
  Mat4 T{};

  double max_abs() const;
  double symmetry_residual() const;
  /// T^mu_mu.
  double trace() const;
  /// T^{mu nu} n_nu for a covector n.
  Vec4 contract(const Vec4& n_lower) const;
};

/// Energy density (E^2+B^2)/2, Poynting flux E x B and Maxwell stress
/// -E_i E_j - B_i B_j + delta_ij (E^2+B^2)/2.
StressTensor stress_tensor(const MaxwellField& field, const MinkowskiPoint& x);

/// Time-normalized direction of T^{mu nu} n_nu. Throws NullCurrent.
Vec4 slater_velocity(const MaxwellField& field, const MinkowskiPoint& x, const UnitNormal& n);

/// Static or moving 3+1 wedge: f_s(x) = c s - a |e.x - v s|. The kink set
/// is the hypersurface e.x = (v / c) t with normal covector (-v/c, e).
struct Wedge3 {
  Vec3 axis{1.0, 0.0, 0.0};  // unit normal of the kink plane
  double a = 0.5;
  double v = 0.0;
  double c = 1.0;

  /// Throws InvalidFamily for |a| >= 1, c - |a v| <= 0 or a non-unit axis.
  void validate() const;
  UnitNormal normal(Side side) const;
  Vec4 kink_normal() const;
  /// Point of the kink set at leaf s with in-plane offsets (u, w).
  MinkowskiPoint kink_point(double s, double u, double w) const;
  static Wedge3 random(std::mt19937_64& engine);
};

struct SideCurrents {
  Vec4 left{};
  Vec4 right{};
};

SideCurrents slater_side_currents(const MaxwellField& field, const Wedge3& wedge,
                                  const MinkowskiPoint& x);

struct SlaterKinkReport {
  MinkowskiPoint x;
  Vec4 j_left{};
  Vec4 j_right{};
  /// m.j_L - m.j_R for the geometric kink normal m, and the relative form.
  double mismatch_geometric = 0.0;
  double mismatch_relative = 0.0;
  /// Spacelike covector (normal of a timelike, kink-like hypersurface) with
  /// n.j_L > 0 > n.j_R.
  Vec4 n_k_star{};
  double flux_left_star = 0.0;
  double flux_right_star = 0.0;
  int sign_left = 0;
  int sign_right = 0;
  bool n_k_star_spacelike = false;
  bool violation = false;
};

/// Throws DegenerateField when j_L and j_R are equal or parallel within
/// 1e-12 (then no normal separates their fluxes, e.g. a single plane wave).
SlaterKinkReport slater_kink_violation(const MaxwellField& field, const Wedge3& wedge,
                                       const MinkowskiPoint& x);

/// The Dirac (N = 1) current on the same kink, run through the flux
/// comparison with the same geometric normal. d = 3 wave function required.
CurrentConditionReport hbdm_kink_check(const MultiTimeWaveFunction& psi, const Wedge3& wedge,
                                       const MinkowskiPoint& x);

using NormalField = std::function<Vec4(const MinkowskiPoint&)>;

/// n_mu of the boost with rapidity beta0 + kappa x_1 along the direction at
/// angle omega x_2 in the (x_1, x_2) plane.
NormalField rotating_boost_field(double beta0, double kappa, double omega);
NormalField constant_normal_field(const Vec4& n_lower);

struct DivergenceReport {
  double divergence = 0.0;  // d_mu (T^{mu nu} n_nu), centered differences
  double scale = 0.0;       // max|T| * max(|k|)
  double relative = 0.0;
};

DivergenceReport slater_divergence_check(const MaxwellField& field, const NormalField& n,
                                         const MinkowskiPoint& x, double h);

}  // namespace hbdm
