#pragma once

// Chart trajectories dq/ds = jvec / j0 on a foliation with kinks, with event
// location on the lifted kink set and the continuation rule across it.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hbdm/geometry.hpp"
#include "hbdm/guidance.hpp"
#include "hbdm/wavefunction.hpp"

namespace hbdm {

struct IntegratorOptions {
  double atol = 1e-9;
  double rtol = 1e-9;
  double initial_step = 1e-2;
  double max_step = 0.25;
  double min_step = 1e-13;
  /// Width of the bracket around an event, in s.
  double event_tol = 1e-11;
  /// How far past its piece boundary a particle may sit before it counts as a crossing.
  double piece_tol = 1e-10;
  /// Near a kink curve the step is capped at the time to reach it, but never below this.
  double kink_step_floor = 1e-3;
  std::size_t max_steps = 200000;
  bool record_samples = true;
  /// Leaf labels, ordered along the direction of integration, where the
  /// configuration is stored exactly (the step is clipped to land on them).
  std::vector<double> checkpoints;
  /// Freeze the configuration at the first kink crossing (negative controls).
  bool stop_at_first_event = false;
};

enum class Termination { ReachedEnd, NullCurrent, CornerPoint, StepFailure };

std::string_view to_string(Termination t) noexcept;

struct TrajectorySample {
  double s = 0.0;
  std::vector<double> q;
  std::vector<int> pieces;
  std::vector<double> velocity;  // dq/ds
  bool event = false;
};

struct KinkCrossing {
  double s = 0.0;
  int slot = 0;
  int kink = 0;
  Side side_from = Side::Left;
  Side side_to = Side::Right;
  std::vector<double> q;
  std::vector<int> pieces_before;
  std::vector<int> pieces_after;
  /// Chart velocities dq/ds of all slots with the old and new piece.
  std::vector<double> chart_velocity_before;
  std::vector<double> chart_velocity_after;
  /// Spacetime velocities dx/dt of all slots with the old and new piece.
  std::vector<double> spacetime_velocity_before;
  std::vector<double> spacetime_velocity_after;
  /// n_K . j from the left and right of the kink hypersurface.
  double flux_left = 0.0;
  double flux_right = 0.0;
  double flux_mismatch = 0.0;
  /// Both fluxes point along the direction of travel.
  bool sign_rule_ok = false;
};

struct TrajectoryRecord {
  std::vector<TrajectorySample> samples;
  std::vector<KinkCrossing> events;
  Termination termination = Termination::ReachedEnd;
  std::string diagnostic;
  double s_end = 0.0;
  std::vector<double> q_end;
  std::vector<int> pieces_end;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  /// One entry per reached checkpoint.
  std::vector<std::vector<double>> checkpoint_q;
  std::vector<std::vector<int>> checkpoint_pieces;
  bool stopped_at_event = false;
};

/// Spacetime velocity jumps at kink crossings, split into the crossing slot
/// and its partners.
struct KinkJumpSummary {
  std::size_t events = 0;
  double max_own_jump = 0.0;
  double max_partner_jump = 0.0;
  double min_partner_jump = 0.0;
  /// Fraction of events whose largest partner jump exceeds the threshold.
  double partner_fraction_above = 0.0;
  double max_flux_mismatch = 0.0;
  bool all_sign_rules_ok = true;
};

KinkJumpSummary summarize_jumps(std::span<const TrajectoryRecord> records, double threshold);

/// Integrates from (s0, q0) to s1 (either direction). `initial_pieces` is
/// required when a particle starts on a kink; otherwise the pieces are
/// inferred from q0. Throws OutOfDomain if [s0, s1] leaves the foliation's
/// range and OnKinkSet for an untagged start on the kink set.
TrajectoryRecord integrate(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                           std::span<const double> q0, double s0, double s1,
                           const IntegratorOptions& options = {},
                           std::span<const int> initial_pieces = {});

/// World lines of a recorded trajectory: one event per sample and particle.
std::vector<std::vector<MinkowskiPoint>> spacetime_trajectory(const Foliation& foliation,
                                                              const TrajectoryRecord& record);

/// Columns s, q_1..q_N, v_1..v_N, event_flag.
std::string trajectory_csv(const TrajectoryRecord& record);
/// Columns s_star, slot, dv_1..dv_N (spacetime velocity jumps).
std::string events_csv(std::span<const TrajectoryRecord> records, int particles);

}  // namespace hbdm
