#pragma once

// Free multi-time Dirac wave functions built from exact plane-wave solutions,
// and the rank-N current tensor psi-bar [gamma^mu1 x ... x gamma^muN] psi.

#include <array>
#include <complex>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hbdm/geometry.hpp"

namespace hbdm {

using Complex = std::complex<double>;
using Spinor = Eigen::VectorXcd;

/// Gamma matrices for d = 1 (2x2) or d = 3 (4x4), metric diag(+1, -1, ...).
class DiracRepresentation {
 public:
  /// "dirac" (standard) or "chiral" (Weyl).
  static DiracRepresentation by_name(std::string_view name, int spatial_dim);
  static DiracRepresentation standard(int spatial_dim);
  static DiracRepresentation chiral(int spatial_dim);

  /// gamma'^mu = U gamma^mu U^dagger for a unitary U.
  DiracRepresentation transformed(const Eigen::MatrixXcd& unitary, std::string name) const;

  int spatial_dim() const { return spatial_dim_; }
  int spinor_dim() const { return static_cast<int>(gamma_.front().rows()); }
  const std::string& name() const { return name_; }
  const Eigen::MatrixXcd& gamma(int mu) const { return gamma_.at(static_cast<std::size_t>(mu)); }
  /// gamma^0 gamma^mu, Hermitian; psi^dagger (this) psi is the mu-current.
  const Eigen::MatrixXcd& current_matrix(int mu) const {
    return current_.at(static_cast<std::size_t>(mu));
  }

  /// max over mu, nu of |{gamma^mu, gamma^nu} - 2 eta^{mu nu}|.
  double clifford_residual() const;
  /// max over mu of |gamma^0 gamma^mu gamma^0 - (gamma^mu)^dagger| and |gamma^0 - gamma^0^dagger|.
  double hermiticity_residual() const;

 private:
  DiracRepresentation(std::string name, int spatial_dim, std::vector<Eigen::MatrixXcd> gamma);

  std::string name_;
  int spatial_dim_;
  std::vector<Eigen::MatrixXcd> gamma_;
  std::vector<Eigen::MatrixXcd> current_;
};

struct PlaneWaveMode {
  std::array<double, 3> k{};
  int energy_sign = +1;
  /// Selects one of the spinor_dim/2 independent solutions (d = 3 only).
  int spin = 0;
  Complex amplitude{1.0, 0.0};
};

/// Unit-norm spinor u with (gamma^0 E - gamma.k) u = m u, E = sign sqrt(k^2 + m^2).
Spinor plane_wave_spinor(const DiracRepresentation& rep, double mass, const PlaneWaveMode& mode);

/// max |(gamma^0 E - gamma.k - m) u|.
double momentum_space_residual(const DiracRepresentation& rep, double mass,
                               const PlaneWaveMode& mode, const Spinor& u);

/// One particle's factor: a finite sum of plane-wave modes.
class ParticleState {
 public:
  ParticleState(const DiracRepresentation& rep, double mass, std::vector<PlaneWaveMode> modes);

  Spinor evaluate(const MinkowskiPoint& x) const;
  const std::vector<PlaneWaveMode>& modes() const { return modes_; }
  double energy(std::size_t i) const { return energy_[i]; }
  const Spinor& spinor(std::size_t i) const { return spinor_[i]; }

 private:
  int spatial_dim_;
  std::vector<PlaneWaveMode> modes_;
  std::vector<double> energy_;
  std::vector<Spinor> spinor_;  // amplitude already folded in
};

/// One summand of psi: coefficient times a tensor product of particle states.
struct ProductTerm {
  Complex coefficient{1.0, 0.0};
  std::vector<std::vector<PlaneWaveMode>> particles;
};

/// Periodic comb of Gaussian packets: modes k_n = 2 pi n / period with
/// weights exp(-(k_n - momentum)^2 width^2 / 2) exp(-i k_n center), cut at
/// `cutoff` standard deviations in k.
std::vector<PlaneWaveMode> gaussian_packet_modes(double center, double momentum, double width,
                                                 double period, int energy_sign = +1,
                                                 double cutoff = 5.0);

class MultiTimeWaveFunction {
 public:
  MultiTimeWaveFunction(DiracRepresentation rep, std::vector<double> masses,
                        std::vector<ProductTerm> terms);

  int particle_count() const { return static_cast<int>(masses_.size()); }
  int spatial_dim() const { return rep_.spatial_dim(); }
  int spinor_dim() const { return rep_.spinor_dim(); }
  /// spinor_dim^N; slot 0 is the most significant index.
  int component_count() const { return components_; }
  const DiracRepresentation& representation() const { return rep_; }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<ProductTerm>& terms() const { return terms_; }

  /// psi(x_1, ..., x_N); one spacetime point per particle (multi-time).
  Spinor evaluate(std::span<const MinkowskiPoint> config) const;

 private:
  DiracRepresentation rep_;
  std::vector<double> masses_;
  std::vector<ProductTerm> terms_;
  std::vector<std::vector<ParticleState>> factors_;  // [term][particle]
  int components_;
};

/// Real components T^{mu_1...mu_N}; slot 0 most significant, base d+1.
struct CurrentTensor {
  int particles = 1;
  int spatial_dim = 1;
  std::vector<double> components;

  int base() const { return spatial_dim + 1; }
  std::size_t flat(std::span<const int> indices) const;
  double at(std::span<const int> indices) const { return components[flat(indices)]; }
  double at(std::initializer_list<int> indices) const {
    return at(std::span<const int>(indices.begin(), indices.size()));
  }
  double max_abs() const;

  /// Contracts every slot except `free_slot` with the given covectors
  /// (lower-index components, one array per slot); returns the free vector.
  std::array<double, 4> contract_except(std::span<const std::array<double, 4>> covectors,
                                        int free_slot) const;
  /// Full contraction with one covector per slot.
  double contract_all(std::span<const std::array<double, 4>> covectors) const;
};

/// Applies a single-particle operator to slot `slot` of an N-slot tensor.
Spinor apply_to_slot(const Eigen::MatrixXcd& op, const Spinor& psi, int slot, int particles);

/// Current tensor of a given spinor-tensor value. Throws NonRealComponent if
/// an imaginary residue exceeds 1e-10 relative to psi^dagger psi.
CurrentTensor current_tensor(const DiracRepresentation& rep, const Spinor& psi, int particles);
CurrentTensor current_tensor(const MultiTimeWaveFunction& psi, std::span<const MinkowskiPoint> config);

using CurrentField = std::function<CurrentTensor(std::span<const MinkowskiPoint>)>;

/// Centered finite-difference divergence on each slot j,
/// d/dx_j^mu T^{..mu..}, maximized over the other indices and reported
/// relative to the largest tensor component at `config`.
std::vector<double> check_divergence(const CurrentField& field,
                                     std::span<const MinkowskiPoint> config, double h);
std::vector<double> check_divergence(const MultiTimeWaveFunction& psi,
                                     std::span<const MinkowskiPoint> config, double h);

}  // namespace hbdm
