#include "hbdm/integrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "hbdm/error.hpp"
#include "hbdm/io.hpp"

namespace hbdm {

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::ReachedEnd: return "ReachedEnd";
    case Termination::NullCurrent: return "NullCurrent";
    case Termination::CornerPoint: return "CornerPoint";
    case Termination::StepFailure: return "StepFailure";
  }
  return "Unknown";
}

namespace {

using State = std::vector<double>;

// Dormand-Prince 5(4).
constexpr std::array<double, 7> kC{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr std::array<double, 7> kB5{35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                                    11.0 / 84, 0.0};
constexpr std::array<double, 7> kB4{5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640,
                                    -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

struct StepResult {
  State q;
  State error;
  State f_end;  // derivative at the new point (first-same-as-last)
};

class Flow {
 public:
  Flow(const MultiTimeWaveFunction& psi, const Foliation& foliation, std::vector<int> pieces)
      : psi_(psi), foliation_(foliation), pieces_(std::move(pieces)) {}

  const std::vector<int>& pieces() const { return pieces_; }
  void set_pieces(std::vector<int> pieces) { pieces_ = std::move(pieces); }

  State rhs(double s, const State& q) const { return rhs(s, q, pieces_); }

  State rhs(double s, const State& q, const std::vector<int>& pieces) const {
    const ChartCurrent c = chart_current(psi_, place_on_leaf(foliation_, s, q, pieces));
    if (!(c.j0 > 0.0)) throw Error(ErrorCode::NullCurrent, "chart density vanishes");
    return c.velocity();
  }

  StepResult step(double s, const State& q, const State& f0, double h) const {
    const std::size_t n = q.size();
    std::array<State, 7> k;
    k[0] = f0;
    State y(n);
    for (int stage = 1; stage < 7; ++stage) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int m = 0; m < stage; ++m) acc += kA[stage][m] * k[static_cast<std::size_t>(m)][i];
        y[i] = q[i] + h * acc;
      }
      k[static_cast<std::size_t>(stage)] = rhs(s + kC[static_cast<std::size_t>(stage)] * h, y);
    }
    StepResult out;
    out.q = y;  // stage 7 node equals the fifth-order solution
    out.error.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (std::size_t m = 0; m < 7; ++m) e += (kB5[m] - kB4[m]) * k[m][i];
      out.error[i] = h * e;
    }
    out.f_end = k[6];
    return out;
  }

 private:
  const MultiTimeWaveFunction& psi_;
  const Foliation& foliation_;
  std::vector<int> pieces_;
};

// Signed distances of slot j to the two ends of its current piece; negative
// means the particle has left the piece. Missing ends are +inf.
struct Boundary {
  double value = 0.0;
  int kink = -1;
  int direction = 0;  // +1: leaving through the right end
};

Boundary nearest_boundary(const Foliation& F, double s, double q, int piece) {
  Boundary out;
  out.value = std::numeric_limits<double>::infinity();
  const int kinks = static_cast<int>(F.kink_count());
  if (piece > 0) {
    const double g = q - F.kink_position(static_cast<std::size_t>(piece - 1), s);
    if (g < out.value) out = {g, piece - 1, -1};
  }
  if (piece < kinks) {
    const double g = F.kink_position(static_cast<std::size_t>(piece), s) - q;
    if (g < out.value) out = {g, piece, +1};
  }
  return out;
}

double boundary_value(const Foliation& F, double s, double q, int kink, int direction) {
  const double xk = F.kink_position(static_cast<std::size_t>(kink), s);
  return direction > 0 ? xk - q : q - xk;
}

double error_norm(const State& q0, const State& q1, const State& err, const IntegratorOptions& o) {
  double acc = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(q0[i]), std::abs(q1[i]));
    acc += (err[i] / sc) * (err[i] / sc);
  }
  return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(err.size(), 1)));
}

std::vector<double> spacetime_velocities(const MultiTimeWaveFunction& psi, const Foliation& F,
                                         double s, const State& q, const std::vector<int>& pieces) {
  std::vector<double> out;
  for (const auto& v : guidance_velocity(psi, place_on_leaf(F, s, q, pieces))) out.push_back(v[1]);
  return out;
}

}  // namespace

TrajectoryRecord integrate(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                           std::span<const double> q0, double s0, double s1,
                           const IntegratorOptions& options, std::span<const int> initial_pieces) {
  const auto N = static_cast<std::size_t>(psi.particle_count());
  if (q0.size() != N) throw Error(ErrorCode::OutOfDomain, "initial configuration has the wrong size");
  const double lo = std::min(s0, s1);
  const double hi = std::max(s0, s1);
  if (lo < foliation.s_min() || hi > foliation.s_max()) {
    throw Error(ErrorCode::OutOfDomain, "integration interval leaves the foliation's range");
  }

  std::vector<int> pieces;
  if (!initial_pieces.empty()) {
    pieces.assign(initial_pieces.begin(), initial_pieces.end());
  } else {
    try {
      pieces = pieces_for_sides(foliation, s0, q0, smooth_sides(N));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::KinkWithoutSide) throw;
      throw Error(ErrorCode::OnKinkSet, "initial configuration on the kink set needs pieces");
    }
  }

  TrajectoryRecord rec;
  Flow flow(psi, foliation, pieces);
  State q(q0.begin(), q0.end());
  double s = s0;
  const double sign = s1 >= s0 ? 1.0 : -1.0;
  double h = sign * std::min(options.initial_step, options.max_step);

  auto finish = [&](Termination t, std::string why) {
    rec.termination = t;
    rec.diagnostic = std::move(why);
    rec.s_end = s;
    rec.q_end = q;
    rec.pieces_end = flow.pieces();
    return rec;
  };
  auto sample = [&](const State& v, bool event) {
    if (options.record_samples) rec.samples.push_back({s, q, flow.pieces(), v, event});
  };
  std::size_t next_cp = 0;
  auto store_checkpoints = [&](bool all) {
    while (next_cp < options.checkpoints.size() &&
           (all || sign * (options.checkpoints[next_cp] - s) <= 0.0)) {
      rec.checkpoint_q.push_back(q);
      rec.checkpoint_pieces.push_back(flow.pieces());
      ++next_cp;
    }
  };
  for (double c : options.checkpoints) {
    if (sign * (c - s0) < 0.0 || sign * (c - s1) > 0.0) {
      throw Error(ErrorCode::OutOfDomain, "checkpoint outside the integration interval");
    }
  }

  State f;
  try {
    f = flow.rhs(s, q);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NullCurrent) return finish(Termination::NullCurrent, e.what());
    throw;
  }
  sample(f, false);
  store_checkpoints(false);

  while (sign * (s1 - s) > 0.0) {
    if (rec.steps + rec.rejected >= options.max_steps) {
      return finish(Termination::StepFailure, "step budget exhausted");
    }
    // Cap the step near kink curves so a crossing cannot be jumped over and back.
    double cap = options.max_step;
    for (std::size_t j = 0; j < N; ++j) {
      const Boundary b = nearest_boundary(foliation, s, q[j], flow.pieces()[j]);
      if (b.kink < 0) continue;
      const double vk = foliation.kink_velocity(static_cast<std::size_t>(b.kink), s);
      const double approach = sign * b.direction * (f[j] - vk);
      if (approach > 0.0) cap = std::min(cap, std::max(b.value / approach, options.kink_step_floor));
    }
    h = sign * std::min(std::abs(h), cap);
    const double goal = next_cp < options.checkpoints.size() ? options.checkpoints[next_cp] : s1;
    bool lands = false;
    if (sign * (s + h - goal) >= 0.0) {
      h = goal - s;
      lands = true;
    }

    StepResult trial;
    try {
      trial = flow.step(s, q, f, h);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NullCurrent) return finish(Termination::NullCurrent, e.what());
      if (std::abs(h) > options.min_step * 4.0) {
        h *= 0.25;
        ++rec.rejected;
        continue;
      }
      return finish(Termination::StepFailure, e.what());
    }
    const double err = error_norm(q, trial.q, trial.error, options);
    if (!(err <= 1.0)) {
      const double factor = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
      h *= factor;
      ++rec.rejected;
      if (std::abs(h) < options.min_step) return finish(Termination::StepFailure, "step size underflow");
      continue;
    }

    // Event detection on the end point of the accepted step.
    const double s_new = s + h;
    struct Crossing {
      std::size_t slot;
      int kink;
      int direction;
    };
    std::vector<Crossing> crossings;
    for (std::size_t j = 0; j < N; ++j) {
      const int p = flow.pieces()[j];
      if (p > 0 && trial.q[j] - foliation.kink_position(static_cast<std::size_t>(p - 1), s_new) < -options.piece_tol) {
        crossings.push_back({j, p - 1, -1});
      }
      if (p < static_cast<int>(foliation.kink_count()) &&
          foliation.kink_position(static_cast<std::size_t>(p), s_new) - trial.q[j] < -options.piece_tol) {
        crossings.push_back({j, p, +1});
      }
    }

    if (crossings.empty()) {
      s = lands ? goal : s_new;
      q = trial.q;
      f = trial.f_end;
      ++rec.steps;
      sample(f, false);
      store_checkpoints(false);
      const double factor = err > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2))) : 5.0;
      h *= factor;
      continue;
    }

    // Locate the earliest crossing by re-stepping from s with a shorter step.
    std::optional<std::pair<double, Crossing>> first;
    std::vector<double> roots;
    try {
      for (const Crossing& c : crossings) {
        auto phi = [&](double theta) {
          if (theta == 0.0) return boundary_value(foliation, s, q[c.slot], c.kink, c.direction);
          const StepResult r = flow.step(s, q, f, theta * h);
          return boundary_value(foliation, s + theta * h, r.q[c.slot], c.kink, c.direction);
        };
        double a = 0.0;
        double fa = phi(0.0);
        double b = 1.0;
        double fb = boundary_value(foliation, s_new, trial.q[c.slot], c.kink, c.direction);
        double root = 0.0;
        if (fa > 0.0) {
          int side = 0;
          while ((b - a) * std::abs(h) > options.event_tol) {
            double m = b - fb * (b - a) / (fb - fa);
            if (!(m > a && m < b)) m = 0.5 * (a + b);
            const double fm = phi(m);
            if (fm > 0.0) {
              a = m;
              fa = fm;
              if (side == -1) fb *= 0.5;
              side = -1;
            } else {
              b = m;
              fb = fm;
              if (side == +1) fa *= 0.5;
              side = +1;
            }
          }
          root = std::abs(fa) <= std::abs(fb) ? a : b;
        }
        roots.push_back(root);
        if (!first || root < first->first) first = std::make_pair(root, c);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NullCurrent) return finish(Termination::NullCurrent, e.what());
      return finish(Termination::StepFailure, e.what());
    }

    const double theta = first->first;
    const Crossing c = first->second;
    for (std::size_t i = 0; i < crossings.size(); ++i) {
      const bool same = crossings[i].slot == c.slot && crossings[i].kink == c.kink;
      if (!same && std::abs(roots[i] - theta) * std::abs(h) <= options.event_tol) {
        return finish(Termination::CornerPoint, "two slots reach the kink set together");
      }
    }

    // Advance to the event.
    if (theta > 0.0) {
      const StepResult r = flow.step(s, q, f, theta * h);
      s += theta * h;
      q = r.q;
      ++rec.steps;
    }
    q[c.slot] = foliation.kink_position(static_cast<std::size_t>(c.kink), s);
    for (std::size_t j = 0; j < N; ++j) {
      if (j == c.slot) continue;
      const int k = foliation.kink_at(s, q[j], options.piece_tol);
      if (k >= 0) return finish(Termination::CornerPoint, "another slot sits on a kink at the event");
    }

    KinkCrossing ev;
    ev.s = s;
    ev.slot = static_cast<int>(c.slot);
    ev.kink = c.kink;
    ev.side_from = c.direction > 0 ? Side::Left : Side::Right;
    ev.side_to = c.direction > 0 ? Side::Right : Side::Left;
    ev.q = q;
    ev.pieces_before = flow.pieces();
    ev.pieces_after = flow.pieces();
    ev.pieces_after[c.slot] += c.direction;
    try {
      ev.chart_velocity_before = flow.rhs(s, q, ev.pieces_before);
      ev.chart_velocity_after = flow.rhs(s, q, ev.pieces_after);
      ev.spacetime_velocity_before = spacetime_velocities(psi, foliation, s, q, ev.pieces_before);
      ev.spacetime_velocity_after = spacetime_velocities(psi, foliation, s, q, ev.pieces_after);

      std::vector<int> left = flow.pieces();
      std::vector<int> right = flow.pieces();
      left[c.slot] = c.kink;
      right[c.slot] = c.kink + 1;
      const ChartCurrent jl = chart_current(psi, place_on_leaf(foliation, s, q, left));
      const ChartCurrent jr = chart_current(psi, place_on_leaf(foliation, s, q, right));
      const KinkHypersurface surface{static_cast<int>(c.slot), c.kink};
      const auto report = compare_fluxes(jl, jr, surface.gradient(foliation, static_cast<int>(N), s));
      ev.flux_left = report.flux_left;
      ev.flux_right = report.flux_right;
      ev.flux_mismatch = report.mismatch;
      const double dir = c.direction * sign;
      ev.sign_rule_ok = report.flux_left * dir > 0.0 && report.flux_right * dir > 0.0;
      rec.events.push_back(ev);
      if (report.null_flux) {
        return finish(Termination::NullCurrent, "both one-sided fluxes vanish at the kink");
      }
      if (!ev.sign_rule_ok) {
        return finish(Termination::StepFailure, "one-sided fluxes do not allow a continuation");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NullCurrent) return finish(Termination::NullCurrent, e.what());
      return finish(Termination::StepFailure, e.what());
    }

    // Continue on the side being entered.
    flow.set_pieces(ev.pieces_after);
    f = ev.chart_velocity_after;
    sample(f, true);
    store_checkpoints(false);
    if (options.stop_at_first_event) {
      rec.stopped_at_event = true;
      store_checkpoints(true);
      return finish(Termination::ReachedEnd, "stopped at the first kink crossing");
    }
  }
  return finish(Termination::ReachedEnd, "");
}

KinkJumpSummary summarize_jumps(std::span<const TrajectoryRecord> records, double threshold) {
  KinkJumpSummary out;
  out.min_partner_jump = std::numeric_limits<double>::infinity();
  std::size_t above = 0;
  for (const auto& rec : records) {
    for (const auto& ev : rec.events) {
      ++out.events;
      double partner = 0.0;
      for (std::size_t j = 0; j < ev.spacetime_velocity_after.size(); ++j) {
        const double dv = std::abs(ev.spacetime_velocity_after[j] - ev.spacetime_velocity_before[j]);
        if (static_cast<int>(j) == ev.slot) {
          out.max_own_jump = std::max(out.max_own_jump, dv);
        } else {
          partner = std::max(partner, dv);
        }
      }
      out.max_partner_jump = std::max(out.max_partner_jump, partner);
      out.min_partner_jump = std::min(out.min_partner_jump, partner);
      above += partner > threshold;
      out.max_flux_mismatch = std::max(out.max_flux_mismatch, ev.flux_mismatch);
      out.all_sign_rules_ok = out.all_sign_rules_ok && ev.sign_rule_ok;
    }
  }
  if (out.events == 0) out.min_partner_jump = 0.0;
  out.partner_fraction_above =
      out.events == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(out.events);
  return out;
}

std::vector<std::vector<MinkowskiPoint>> spacetime_trajectory(const Foliation& foliation,
                                                              const TrajectoryRecord& record) {
  std::vector<std::vector<MinkowskiPoint>> out;
  if (record.samples.empty()) return out;
  out.resize(record.samples.front().q.size());
  for (const auto& smp : record.samples) {
    for (std::size_t j = 0; j < smp.q.size(); ++j) {
      out[j].push_back(MinkowskiPoint::in_1d(foliation.height(smp.s, smp.q[j], smp.pieces[j]), smp.q[j]));
    }
  }
  return out;
}

std::string trajectory_csv(const TrajectoryRecord& record) {
  const std::size_t n = record.samples.empty() ? record.q_end.size() : record.samples.front().q.size();
  std::vector<std::string> header{"s"};
  for (std::size_t j = 1; j <= n; ++j) header.push_back("q_" + std::to_string(j));
  for (std::size_t j = 1; j <= n; ++j) header.push_back("v_" + std::to_string(j));
  header.push_back("event_flag");
  CsvWriter csv(header);
  std::vector<double> row;
  for (const auto& smp : record.samples) {
    row.assign(1, smp.s);
    row.insert(row.end(), smp.q.begin(), smp.q.end());
    row.insert(row.end(), smp.velocity.begin(), smp.velocity.end());
    row.push_back(smp.event ? 1.0 : 0.0);
    csv.row(row);
  }
  return csv.str();
}

std::string events_csv(std::span<const TrajectoryRecord> records, int particles) {
  std::vector<std::string> header{"s_star", "slot"};
  for (int j = 1; j <= particles; ++j) header.push_back("dv_" + std::to_string(j));
  CsvWriter csv(header);
  std::vector<double> row;
  for (const auto& rec : records) {
    for (const auto& ev : rec.events) {
      row = {ev.s, static_cast<double>(ev.slot + 1)};
      for (std::size_t j = 0; j < ev.spacetime_velocity_after.size(); ++j) {
        row.push_back(std::abs(ev.spacetime_velocity_after[j] - ev.spacetime_velocity_before[j]));
      }
      csv.row(row);
    }
  }
  return csv.str();
}

}  // namespace hbdm
