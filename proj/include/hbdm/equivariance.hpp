#pragma once

// Monte Carlo test of equivariance: draw configurations from the chart
// density on one leaf, transport them along the guidance flow and compare the
// arrival histograms with quadrature of the chart density on later leaves.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "hbdm/geometry.hpp"
#include "hbdm/integrator.hpp"
#include "hbdm/wavefunction.hpp"

namespace hbdm {

/// Axis-aligned box in chart coordinates, one interval per particle.
struct Window {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dimension() const { return lo.size(); }
  bool contains(std::span<const double> q) const;
  double volume() const;
};

/// splitmix64 finalizer; also used to derive per-trajectory streams.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
/// Generator for stream `index` of a run seeded with `seed`.
std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t index);
/// Uniform double in [0, 1) from the top 53 bits (portable across libraries).
double uniform01(std::mt19937_64& engine);

/// Chart density j0 at (s, q), pieces chosen from positions (left piece on a kink).
double chart_density(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                     std::span<const double> q);

struct SamplingOptions {
  double envelope_factor = 1.1;
  /// Midpoint-grid points per dimension used for the envelope and the masses.
  int grid = 64;
  /// Box holding (numerically) all of the mass, e.g. one period cell.
  std::optional<Window> reference;
  double mass_epsilon = 1e-3;
  int max_rebuilds = 8;
  int threads = 1;
};

struct SampleSet {
  std::vector<std::vector<double>> q;
  double envelope = 0.0;
  int rebuilds = 0;
  std::size_t proposals = 0;
  double window_mass = 0.0;
  /// NaN when no reference box is given.
  double reference_mass = 0.0;
  double mass_fraction = 1.0;
};

/// M independent draws from j0(s0, .) restricted to the window, by rejection
/// against a uniform envelope. Throws OutOfDomain when the window holds less
/// than 1 - mass_epsilon of the reference mass; EnvelopeViolation when the
/// envelope still fails after max_rebuilds rebuilds.
SampleSet sample_initial(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s0,
                         const Window& window, std::size_t M, std::uint64_t seed,
                         const SamplingOptions& options = {});

enum class Control {
  None,
  /// Every particle keeps its initial position.
  Frozen,
  /// The configuration stops moving at its first kink crossing.
  FrozenAtKink,
};

struct EquivarianceOptions {
  SamplingOptions sampling{};
  IntegratorOptions integrator{};
  /// Joint histogram bins per dimension (bins^N cells in total).
  int joint_bins = 7;
  /// Bins of each one-particle marginal.
  int marginal_bins = 50;
  /// Quadrature points per dimension; a multiple of both bin counts.
  int quadrature = 350;
  /// Points in s for the kink flux integrals.
  int flux_quadrature = 200;
  double tv_factor = 3.0;
  int threads = 1;
  Control control = Control::None;
  /// Also compare arrivals on the flat surface t = non_leaf_time (not a leaf).
  std::optional<double> non_leaf_time;
};

struct LeafStatistics {
  double s = 0.0;
  std::vector<double> empirical_joint;  // fractions of M, window cells only
  std::vector<double> theory_joint;
  std::vector<std::vector<double>> empirical_marginal;
  std::vector<std::vector<double>> theory_marginal;
  double outside_empirical = 0.0;
  double outside_theory = 0.0;
  double aborted_fraction = 0.0;
  double tv_joint = 0.0;
  double tv_bound_joint = 0.0;
  std::vector<double> tv_marginal;
  double tv_bound_marginal = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool within_bound = false;
};

/// Signed kink crossings of one slot compared with the flux integral of
/// n_K . j over the kink hypersurface between s0 and the last target.
struct FluxCheck {
  int slot = 0;
  int kink = 0;
  double expected_left = 0.0;
  double expected_right = 0.0;
  long long observed_signed = 0;
  std::size_t observed_total = 0;
  double sigma = 0.0;
  bool within = false;
};

struct EnsembleRun {
  std::uint64_t seed = 0;
  std::size_t M = 0;
  double s0 = 0.0;
  std::vector<double> targets;
  Window window;
  Control control = Control::None;
  SampleSet initial;  // q cleared after the run
  double normalizer = 0.0;
  std::vector<LeafStatistics> leaves;
  std::size_t aborted = 0;
  double aborted_fraction = 0.0;
  std::size_t crossed = 0;
  double crossed_fraction = 0.0;
  KinkJumpSummary jumps;
  std::vector<FluxCheck> flux;
  std::optional<LeafStatistics> non_leaf;
  double non_leaf_unresolved = 0.0;
};

EnsembleRun run_equivariance(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                             double s0, std::vector<double> targets, const Window& window,
                             std::size_t M, std::uint64_t seed,
                             const EquivarianceOptions& options = {});

/// Histogram CSV for one leaf: cell, lo_1, hi_1, ..., empirical, theory.
std::string histogram_csv(const LeafStatistics& leaf, const Window& window, int bins);

}  // namespace hbdm
