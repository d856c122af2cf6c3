#include "hbdm/equivariance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "hbdm/error.hpp"
#include "hbdm/guidance.hpp"
#include "hbdm/io.hpp"
#include "hbdm/parallel.hpp"

namespace hbdm {

bool Window::contains(std::span<const double> q) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(q[i] >= lo[i] && q[i] < hi[i])) return false;
  }
  return true;
}

double Window::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index)));
}

double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double chart_density(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                     std::span<const double> q) {
  std::vector<int> pieces;
  for (double x : q) pieces.push_back(foliation.piece_of(s, x));
  const LeafConfiguration leaf = place_on_leaf(foliation, s, q, pieces);
  double metric = 1.0;
  for (double f1 : leaf.slope) metric *= std::sqrt(1.0 - f1 * f1);
  return metric * rho_sigma(psi, leaf);
}

namespace {

std::size_t int_pow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

// Midpoint grid over a box: cell `flat` -> point, slot 0 most significant.
void grid_point(const Window& box, int points, std::size_t flat, std::vector<double>& q,
                std::vector<int>& index) {
  const std::size_t n = box.dimension();
  for (std::size_t d = n; d-- > 0;) {
    index[d] = static_cast<int>(flat % static_cast<std::size_t>(points));
    flat /= static_cast<std::size_t>(points);
    q[d] = box.lo[d] + (box.hi[d] - box.lo[d]) * (index[d] + 0.5) / points;
  }
}

struct GridValues {
  std::vector<double> values;
  double cell_volume = 0.0;
  double max = 0.0;
  double integral = 0.0;
};

template <class Density>
GridValues evaluate_grid(const Window& box, int points, int threads, Density&& density) {
  const std::size_t n = box.dimension();
  GridValues g;
  g.values.assign(int_pow(static_cast<std::size_t>(points), n), 0.0);
  g.cell_volume = box.volume() / static_cast<double>(g.values.size());
  parallel_for(g.values.size(), threads, [&](std::size_t i) {
    std::vector<double> q(n);
    std::vector<int> idx(n);
    grid_point(box, points, i, q, idx);
    g.values[i] = density(q);
  });
  for (double v : g.values) {
    g.max = std::max(g.max, v);
    g.integral += v;
  }
  g.integral *= g.cell_volume;
  return g;
}

int bin_of(double x, double lo, double hi, int bins) {
  if (!(x >= lo && x < hi)) return -1;
  return std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
}

// Fills empirical and theory histograms plus TV and chi^2 statistics.
LeafStatistics compare(double s, const std::vector<const std::vector<double>*>& arrivals,
                       std::size_t M, const GridValues& theory_grid, double normalizer,
                       const Window& window, const EquivarianceOptions& o) {
  const std::size_t n = window.dimension();
  const auto jb = static_cast<std::size_t>(o.joint_bins);
  const auto mb = static_cast<std::size_t>(o.marginal_bins);
  const auto Q = static_cast<std::size_t>(o.quadrature);
  const double Md = static_cast<double>(M);

  LeafStatistics st;
  st.s = s;
  st.empirical_joint.assign(int_pow(jb, n), 0.0);
  st.theory_joint.assign(st.empirical_joint.size(), 0.0);
  st.empirical_marginal.assign(n, std::vector<double>(mb, 0.0));
  st.theory_marginal.assign(n, std::vector<double>(mb, 0.0));
  std::vector<double> marginal_outside_emp(n, 0.0);

  std::size_t arrived = 0;
  for (const auto* q : arrivals) {
    if (q == nullptr) continue;
    ++arrived;
    std::size_t cell = 0;
    bool inside = true;
    for (std::size_t d = 0; d < n; ++d) {
      const int jbin = bin_of((*q)[d], window.lo[d], window.hi[d], o.joint_bins);
      const int mbin = bin_of((*q)[d], window.lo[d], window.hi[d], o.marginal_bins);
      if (mbin < 0) marginal_outside_emp[d] += 1.0 / Md;
      else st.empirical_marginal[d][static_cast<std::size_t>(mbin)] += 1.0 / Md;
      if (jbin < 0) inside = false;
      else cell = cell * jb + static_cast<std::size_t>(jbin);
    }
    if (inside) st.empirical_joint[cell] += 1.0 / Md;
    else st.outside_empirical += 1.0 / Md;
  }
  st.aborted_fraction = static_cast<double>(M - arrived) / Md;

  std::vector<int> idx(n);
  std::vector<double> q(n);
  for (std::size_t i = 0; i < theory_grid.values.size(); ++i) {
    grid_point(window, o.quadrature, i, q, idx);
    const double w = theory_grid.values[i] * theory_grid.cell_volume / normalizer;
    std::size_t cell = 0;
    for (std::size_t d = 0; d < n; ++d) {
      cell = cell * jb + static_cast<std::size_t>(idx[d]) / (Q / jb);
      st.theory_marginal[d][static_cast<std::size_t>(idx[d]) / (Q / mb)] += w;
    }
    st.theory_joint[cell] += w;
  }
  double inside_theory = 0.0;
  for (double t : st.theory_joint) inside_theory += t;
  st.outside_theory = std::max(0.0, 1.0 - inside_theory);

  double tv = 0.0;
  for (std::size_t c = 0; c < st.theory_joint.size(); ++c) tv += std::abs(st.empirical_joint[c] - st.theory_joint[c]);
  tv += std::abs(st.outside_empirical - st.outside_theory) + st.aborted_fraction;
  st.tv_joint = 0.5 * tv;
  st.tv_bound_joint = o.tv_factor * std::sqrt(static_cast<double>(st.theory_joint.size()) / Md);

  st.tv_bound_marginal = o.tv_factor * std::sqrt(static_cast<double>(mb) / Md);
  for (std::size_t d = 0; d < n; ++d) {
    double m = 0.0;
    double inside = 0.0;
    for (std::size_t b = 0; b < mb; ++b) {
      m += std::abs(st.empirical_marginal[d][b] - st.theory_marginal[d][b]);
      inside += st.theory_marginal[d][b];
    }
    m += std::abs(marginal_outside_emp[d] - std::max(0.0, 1.0 - inside)) + st.aborted_fraction;
    st.tv_marginal.push_back(0.5 * m);
  }

  const double Meff = static_cast<double>(arrived);
  int used = 0;
  auto chi_term = [&](double emp, double th) {
    const double E = Meff * th;
    if (E < 5.0) return;
    const double O = Md * emp;
    st.chi2 += (O - E) * (O - E) / E;
    ++used;
  };
  for (std::size_t c = 0; c < st.theory_joint.size(); ++c) chi_term(st.empirical_joint[c], st.theory_joint[c]);
  chi_term(st.outside_empirical, st.outside_theory);
  st.dof = std::max(used - 1, 0);
  st.p_value = st.dof > 0 ? boost::math::gamma_q(0.5 * st.dof, 0.5 * st.chi2) : 1.0;

  st.within_bound = st.tv_joint <= st.tv_bound_joint;
  for (double m : st.tv_marginal) st.within_bound = st.within_bound && m <= st.tv_bound_marginal;
  return st;
}

// Leaf label at which a recorded world line of `slot` meets t = T, and the
// position there; nullopt if the sampled span does not cross T.
std::optional<double> crossing_position(const Foliation& F, const TrajectoryRecord& rec,
                                        std::size_t slot, double T) {
  auto t_of = [&](const TrajectorySample& smp) {
    return F.height(smp.s, smp.q[slot], smp.pieces[slot]);
  };
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    const auto& a = rec.samples[i - 1];
    const auto& b = rec.samples[i];
    if (!(t_of(a) <= T && t_of(b) > T)) continue;
    // Cubic Hermite in s on the segment, evaluated on the pieces of its start.
    const double h = b.s - a.s;
    const double va = a.velocity[slot];
    const double vb = b.event ? va : b.velocity[slot];
    auto q_at = [&](double u) {
      const double h00 = 2 * u * u * u - 3 * u * u + 1;
      const double h10 = u * u * u - 2 * u * u + u;
      const double h01 = -2 * u * u * u + 3 * u * u;
      const double h11 = u * u * u - u * u;
      return h00 * a.q[slot] + h10 * h * va + h01 * b.q[slot] + h11 * h * vb;
    };
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (lo + hi);
      const double t = F.height(a.s + m * h, q_at(m), a.pieces[slot]);
      if (t <= T) lo = m; else hi = m;
    }
    return q_at(0.5 * (lo + hi));
  }
  return std::nullopt;
}

}  // namespace

SampleSet sample_initial(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s0,
                         const Window& window, std::size_t M, std::uint64_t seed,
                         const SamplingOptions& options) {
  const auto n = static_cast<std::size_t>(psi.particle_count());
  if (window.dimension() != n) throw Error(ErrorCode::OutOfDomain, "window dimension differs from N");
  auto density = [&](const std::vector<double>& q) { return chart_density(psi, foliation, s0, q); };

  SampleSet out;
  const GridValues grid = evaluate_grid(window, options.grid, options.threads, density);
  out.window_mass = grid.integral;
  out.reference_mass = std::numeric_limits<double>::quiet_NaN();
  if (options.reference) {
    out.reference_mass = evaluate_grid(*options.reference, options.grid, options.threads, density).integral;
    out.mass_fraction = out.window_mass / out.reference_mass;
    if (out.mass_fraction < 1.0 - options.mass_epsilon) {
      std::ostringstream os;
      os << "window holds only " << out.mass_fraction << " of the reference mass";
      throw Error(ErrorCode::OutOfDomain, os.str());
    }
  }
  if (M == 0) return out;
  if (!(grid.max > 0.0)) throw Error(ErrorCode::NullCurrent, "density vanishes on the window");

  out.envelope = options.envelope_factor * grid.max;
  for (;;) {
    std::vector<std::vector<double>> draws(M);
    std::vector<std::size_t> proposals(M, 0);
    std::vector<double> violation(M, 0.0);
    const double envelope = out.envelope;
    parallel_for(M, options.threads, [&](std::size_t i) {
      auto engine = stream_engine(seed, i);
      std::vector<double> q(n);
      for (;;) {
        ++proposals[i];
        for (std::size_t d = 0; d < n; ++d) {
          q[d] = window.lo[d] + (window.hi[d] - window.lo[d]) * uniform01(engine);
        }
        const double u = uniform01(engine) * envelope;
        const double p = density(q);
        if (p > envelope) violation[i] = std::max(violation[i], p);
        if (u < p) break;
      }
      draws[i] = q;
    });
    out.proposals = 0;
    for (auto p : proposals) out.proposals += p;
    const double worst = *std::max_element(violation.begin(), violation.end());
    if (worst == 0.0) {
      out.q = std::move(draws);
      return out;
    }
    if (++out.rebuilds > options.max_rebuilds) {
      throw Error(ErrorCode::EnvelopeViolation, "density exceeds the rejection envelope");
    }
    out.envelope = options.envelope_factor * worst;
  }
}

EnsembleRun run_equivariance(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                             double s0, std::vector<double> targets, const Window& window,
                             std::size_t M, std::uint64_t seed, const EquivarianceOptions& options) {
  const auto n = static_cast<std::size_t>(psi.particle_count());
  if (targets.empty() || !std::is_sorted(targets.begin(), targets.end()) || targets.front() <= s0) {
    throw Error(ErrorCode::OutOfDomain, "targets must be increasing and beyond s0");
  }
  if (options.quadrature % options.joint_bins != 0 || options.quadrature % options.marginal_bins != 0) {
    throw Error(ErrorCode::OutOfDomain, "quadrature must be a multiple of both bin counts");
  }
  if (n > 3) throw Error(ErrorCode::Unsupported, "equivariance runs support N <= 3");

  EnsembleRun run;
  run.seed = seed;
  run.M = M;
  run.s0 = s0;
  run.targets = targets;
  run.window = window;
  run.control = options.control;

  SamplingOptions sopt = options.sampling;
  sopt.threads = options.threads;
  run.initial = sample_initial(psi, foliation, s0, window, M, seed, sopt);

  const int th = options.threads;
  const GridValues start = evaluate_grid(window, options.quadrature, th, [&](const std::vector<double>& q) {
    return chart_density(psi, foliation, s0, q);
  });
  run.normalizer = start.integral;

  // Transport.
  std::vector<TrajectoryRecord> records(M);
  std::vector<std::vector<double>> non_leaf(M);
  std::vector<char> non_leaf_ok(M, 0);
  IntegratorOptions iopt = options.integrator;
  iopt.checkpoints = targets;
  iopt.stop_at_first_event = options.control == Control::FrozenAtKink;
  iopt.record_samples = options.non_leaf_time.has_value();
  parallel_for(M, th, [&](std::size_t i) {
    const auto& q0 = run.initial.q[i];
    if (options.control == Control::Frozen) {
      TrajectoryRecord r;
      r.checkpoint_q.assign(targets.size(), q0);
      r.q_end = q0;
      r.s_end = targets.back();
      records[i] = std::move(r);
      return;
    }
    TrajectoryRecord r = integrate(psi, foliation, q0, s0, targets.back(), iopt);
    if (options.non_leaf_time) {
      std::vector<double> pos(n);
      bool ok = true;
      for (std::size_t j = 0; j < n && ok; ++j) {
        const auto x = crossing_position(foliation, r, j, *options.non_leaf_time);
        if (x) pos[j] = *x; else ok = false;
      }
      non_leaf[i] = pos;
      non_leaf_ok[i] = ok;
      r.samples.clear();
      r.samples.shrink_to_fit();
    }
    records[i] = std::move(r);
  });

  for (const auto& r : records) {
    if (r.termination != Termination::ReachedEnd) ++run.aborted;
    if (!r.events.empty()) ++run.crossed;
  }
  const double Md = static_cast<double>(std::max<std::size_t>(M, 1));
  run.aborted_fraction = static_cast<double>(run.aborted) / Md;
  run.crossed_fraction = static_cast<double>(run.crossed) / Md;
  run.jumps = summarize_jumps(records, 1e-3);

  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double s = targets[k];
    const GridValues theory = evaluate_grid(window, options.quadrature, th, [&](const std::vector<double>& q) {
      return chart_density(psi, foliation, s, q);
    });
    std::vector<const std::vector<double>*> arrivals(M, nullptr);
    for (std::size_t i = 0; i < M; ++i) {
      if (records[i].checkpoint_q.size() > k) arrivals[i] = &records[i].checkpoint_q[k];
    }
    run.leaves.push_back(compare(s, arrivals, M, theory, run.normalizer, window, options));
  }

  // Flux of n_K . j through each slot-kink hypersurface.
  if (foliation.kink_count() > 0 && options.control == Control::None) {
    const double s1 = targets.back();
    const int ns = options.flux_quadrature;
    Window others;
    for (std::size_t d = 0; d + 1 < n; ++d) {
      others.lo.push_back(0.0);
      others.hi.push_back(0.0);
    }
    for (std::size_t slot = 0; slot < n; ++slot) {
      for (std::size_t kink = 0; kink < foliation.kink_count(); ++kink) {
        std::size_t col = 0;
        for (std::size_t d = 0; d < n; ++d) {
          if (d == slot) continue;
          others.lo[col] = window.lo[d];
          others.hi[col] = window.hi[d];
          ++col;
        }
        const int qpts = n == 1 ? 1 : options.quadrature;
        const std::size_t per_s = n == 1 ? 1 : int_pow(static_cast<std::size_t>(qpts), n - 1);
        const double other_cell = n == 1 ? 1.0 : others.volume() / static_cast<double>(per_s);
        std::vector<double> left(static_cast<std::size_t>(ns) * per_s, 0.0);
        std::vector<double> right(left.size(), 0.0);
        parallel_for(left.size(), th, [&](std::size_t i) {
          const std::size_t is = i / per_s;
          const double s = s0 + (s1 - s0) * (static_cast<double>(is) + 0.5) / ns;
          std::vector<double> oq(n > 1 ? n - 1 : 0);
          std::vector<int> idx(oq.size());
          if (n > 1) grid_point(others, qpts, i % per_s, oq, idx);
          std::vector<double> q(n);
          std::vector<int> pieces(n);
          std::size_t col2 = 0;
          for (std::size_t d = 0; d < n; ++d) {
            if (d == slot) {
              q[d] = foliation.kink_position(kink, s);
            } else {
              q[d] = oq[col2++];
              pieces[d] = foliation.piece_of(s, q[d]);
            }
          }
          const KinkHypersurface surface{static_cast<int>(slot), static_cast<int>(kink)};
          const auto grad = surface.gradient(foliation, static_cast<int>(n), s);
          for (int side = 0; side < 2; ++side) {
            pieces[slot] = static_cast<int>(kink) + side;
            if (foliation.kink_at(s, q[slot]) < 0) continue;
            double value = 0.0;
            try {
              const auto c = chart_current(psi, place_on_leaf(foliation, s, q, pieces)).as_vector();
              for (std::size_t a = 0; a < grad.size(); ++a) value += grad[a] * c[a];
            } catch (const Error& e) {
              if (e.code() != ErrorCode::NullCurrent) throw;
            }
            (side == 0 ? left : right)[i] = value;
          }
        });
        FluxCheck fc;
        fc.slot = static_cast<int>(slot);
        fc.kink = static_cast<int>(kink);
        const double w = (s1 - s0) / ns * other_cell * static_cast<double>(M) / run.normalizer;
        for (double v : left) fc.expected_left += v * w;
        for (double v : right) fc.expected_right += v * w;
        for (const auto& r : records) {
          for (const auto& ev : r.events) {
            if (ev.slot != fc.slot || ev.kink != fc.kink) continue;
            ++fc.observed_total;
            fc.observed_signed += ev.side_from == Side::Left ? 1 : -1;
          }
        }
        fc.sigma = std::sqrt(static_cast<double>(std::max<std::size_t>(fc.observed_total, 1)));
        fc.within = std::abs(static_cast<double>(fc.observed_signed) - fc.expected_left) <= 3.0 * fc.sigma + 1.0;
        run.flux.push_back(fc);
      }
    }
  }

  if (options.non_leaf_time) {
    const double T = *options.non_leaf_time;
    const GridValues theory = evaluate_grid(window, options.quadrature, th, [&](const std::vector<double>& q) {
      std::vector<MinkowskiPoint> ev;
      std::vector<std::array<double, 4>> normals;
      for (double x : q) {
        ev.push_back(MinkowskiPoint::in_1d(T, x));
        normals.push_back({1.0, 0.0, 0.0, 0.0});
      }
      return std::max(0.0, current_tensor(psi, ev).contract_all(normals));
    });
    std::vector<const std::vector<double>*> arrivals(M, nullptr);
    std::size_t unresolved = 0;
    for (std::size_t i = 0; i < M; ++i) {
      if (non_leaf_ok[i]) arrivals[i] = &non_leaf[i];
      else ++unresolved;
    }
    run.non_leaf = compare(T, arrivals, M, theory, run.normalizer, window, options);
    run.non_leaf_unresolved = static_cast<double>(unresolved) / Md;
  }

  run.initial.q.clear();
  run.initial.q.shrink_to_fit();
  return run;
}

std::string histogram_csv(const LeafStatistics& leaf, const Window& window, int bins) {
  const std::size_t n = window.dimension();
  std::vector<std::string> header{"cell"};
  for (std::size_t d = 1; d <= n; ++d) {
    header.push_back("lo_" + std::to_string(d));
    header.push_back("hi_" + std::to_string(d));
  }
  header.push_back("empirical");
  header.push_back("theory");
  CsvWriter csv(header);
  std::vector<double> row;
  std::vector<int> idx(n);
  for (std::size_t c = 0; c < leaf.empirical_joint.size(); ++c) {
    std::size_t rem = c;
    for (std::size_t d = n; d-- > 0;) {
      idx[d] = static_cast<int>(rem % static_cast<std::size_t>(bins));
      rem /= static_cast<std::size_t>(bins);
    }
    row.assign(1, static_cast<double>(c));
    for (std::size_t d = 0; d < n; ++d) {
      const double w = (window.hi[d] - window.lo[d]) / bins;
      row.push_back(window.lo[d] + w * idx[d]);
      row.push_back(window.lo[d] + w * (idx[d] + 1));
    }
    row.push_back(leaf.empirical_joint[c]);
    row.push_back(leaf.theory_joint[c]);
    csv.row(row);
  }
  row.assign(1, -1.0);
  for (std::size_t d = 0; d < 2 * n; ++d) row.push_back(std::numeric_limits<double>::quiet_NaN());
  row.push_back(leaf.outside_empirical);
  row.push_back(leaf.outside_theory);
  csv.row(row);
  return csv.str();
}

}  // namespace hbdm
