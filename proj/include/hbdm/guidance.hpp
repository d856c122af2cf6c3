#pragma once

// Guidance law on a foliation, the chart current (j0, jvec) in leaf-graph
// coordinates (s, q_1, ..., q_N), the foliation-independent current form J
// and the kink current-condition checker. One spatial dimension.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hbdm/geometry.hpp"
#include "hbdm/wavefunction.hpp"

namespace hbdm {

using Covector = std::array<double, 4>;

/// N particles placed on leaf s at graph coordinates q, each evaluated on
/// the given smooth piece of the leaf.
struct LeafConfiguration {
  double s = 0.0;
  std::vector<double> q;
  std::vector<int> pieces;
  std::vector<MinkowskiPoint> events;
  std::vector<double> slope;
  std::vector<double> lapse;
  std::vector<Covector> normal;  // n_mu, index down
};

LeafConfiguration place_on_leaf(const Foliation& foliation, double s, std::span<const double> q,
                                std::span<const int> pieces);

/// Pieces selected by per-particle side tags (KinkWithoutSide for an
/// untagged particle on a kink).
std::vector<int> pieces_for_sides(const Foliation& foliation, double s, std::span<const double> q,
                                  std::span<const Side> sides);

/// All-smooth side tags for N particles.
std::vector<Side> smooth_sides(std::size_t particles);

/// Chart coordinates (s, q) <-> configurations on the leaves of a foliation.
class ConfigurationChart {
 public:
  ConfigurationChart(const Foliation& foliation, int particles)
      : foliation_(&foliation), particles_(particles) {}

  const Foliation& foliation() const { return *foliation_; }
  int particles() const { return particles_; }

  std::vector<MinkowskiPoint> to_spacetime(double s, std::span<const double> q,
                                           std::span<const Side> sides) const;
  /// Leaf label through `event` (bisection on the leaf ordering).
  double leaf_label(const MinkowskiPoint& event, double s_lo, double s_hi,
                    double tol = 1e-13) const;

 private:
  const Foliation* foliation_;
  int particles_;
};

/// Spacetime direction (1, dx/dt) of every particle (time component 1).
/// Throws NullCurrent at a node.
std::vector<Covector> guidance_velocity(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf);
std::vector<Covector> guidance_velocity(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                                        double s, std::span<const double> q,
                                        std::span<const Side> sides);

/// |psi|^2 density on the leaf relative to its invariant length measure.
double rho_sigma(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf);
double rho_sigma(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                 std::span<const double> q, std::span<const Side> sides);

struct ChartCurrent {
  double s = 0.0;
  std::vector<double> q;
  std::vector<int> pieces;
  double j0 = 0.0;
  std::vector<double> jvec;
  /// dq_j/ds; zero where j0 vanishes.
  std::vector<double> velocity() const;
  /// (j0, jvec_1, ..., jvec_N).
  std::vector<double> as_vector() const;
};

ChartCurrent chart_current(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf);
ChartCurrent chart_current(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                           std::span<const double> q, std::span<const Side> sides);

/// Chart velocity dq/ds of one particle moving with spacetime velocity v = dx/dt.
double chart_velocity_component(double v, double slope, double lapse);

// ---------------------------------------------------------------- forms

/// Sign of the permutation that sorts `indices`; 0 if an index repeats.
int permutation_sign(std::span<const int> indices);

/// Totally antisymmetric covariant tensor, stored on increasing index sets.
struct DifferentialForm {
  int dimension = 0;
  int degree = 0;
  std::vector<std::vector<int>> index_sets;
  std::vector<double> values;

  double component(std::span<const int> indices) const;
  double component(std::initializer_list<int> indices) const {
    return component(std::span<const int>(indices.begin(), indices.size()));
  }
  double max_abs() const;
};

/// Increasing k-subsets of {0, ..., n-1} in lexicographic order.
std::vector<std::vector<int>> increasing_index_sets(int n, int k);

/// The dN-form J on (d+1)N-dimensional configuration spacetime. Coordinates
/// are ordered (t_1, x_1, ..., t_N, x_N) per particle block; the volume form
/// is the product of the per-particle metric volume forms.
DifferentialForm current_form_J(const MultiTimeWaveFunction& psi,
                                std::span<const MinkowskiPoint> config);
DifferentialForm current_form_J(const CurrentTensor& T);

/// Coordinate expression of J restricted to the pieces of the leaves, in
/// chart coordinates (s, q_1, ..., q_N).
DifferentialForm pushforward_form(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf);

/// j^{A0} eps_{A0 A1 ... AN} on the chart, same index-set layout.
DifferentialForm chart_current_form(const ChartCurrent& current);

struct PushforwardReport {
  double residual = 0.0;  // max |phi_* J - j.eps| / max |j.eps|
  DifferentialForm pushed;
  DifferentialForm expected;
};

/// Throws OnKinkSet if a particle sits on a kink with a Smooth tag.
PushforwardReport pushforward_identity_check(const MultiTimeWaveFunction& psi,
                                             const Foliation& foliation, double s,
                                             std::span<const double> q,
                                             std::span<const Side> sides);

// ------------------------------------------------------- kink current check

/// Chart hypersurface {q_slot = x_kink(s)} of the lifted kink set.
struct KinkHypersurface {
  int slot = 0;
  int kink = 0;
  /// Gradient of q_slot - x_kink(s) in chart coordinates (points right).
  std::vector<double> gradient(const Foliation& foliation, int particles, double s) const;
};

std::vector<KinkHypersurface> kink_hypersurfaces(const Foliation& foliation, int particles);

struct CurrentConditionReport {
  double s = 0.0;
  std::vector<double> q;
  int slot = 0;
  int kink = 0;
  double flux_left = 0.0;
  double flux_right = 0.0;
  double mismatch = 0.0;  // |left - right| / max(|left|, |right|)
  bool same_sign = false;
  bool null_flux = false;
};

/// Compares n_K . j from both sides of the kink hypersurface through (s, q).
/// n_K is the normal with respect to `aux_product` (Euclidean if absent) and
/// the same product is used for the dot. Throws NotOnKinkSet, CornerPoint.
CurrentConditionReport current_condition_check(const MultiTimeWaveFunction& psi,
                                               const Foliation& foliation, double s,
                                               std::span<const double> q,
                                               const std::optional<Eigen::MatrixXd>& aux_product = {},
                                               double kink_tol = 1e-10);

/// Same comparison for arbitrary one-sided chart currents across a given
/// hypersurface; shared by the integrator and the Slater contrast.
CurrentConditionReport compare_fluxes(const ChartCurrent& left, const ChartCurrent& right,
                                      const std::vector<double>& normal_gradient,
                                      const std::optional<Eigen::MatrixXd>& aux_product = {});

}  // namespace hbdm
