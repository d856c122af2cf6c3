#include "hbdm/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "hbdm/error.hpp"

namespace hbdm {

namespace {

void require_one_dimensional(const MultiTimeWaveFunction& psi) {
  if (psi.spatial_dim() != 1) {
    throw Error(ErrorCode::Unsupported, "guidance on foliations is implemented for d = 1");
  }
}

}  // namespace

LeafConfiguration place_on_leaf(const Foliation& foliation, double s, std::span<const double> q,
                                std::span<const int> pieces) {
  LeafConfiguration leaf;
  leaf.s = s;
  leaf.q.assign(q.begin(), q.end());
  leaf.pieces.assign(pieces.begin(), pieces.end());
  for (std::size_t j = 0; j < q.size(); ++j) {
    const int piece = pieces[j];
    const double f1 = foliation.slope(s, q[j], piece);
    if (std::abs(f1) >= 1.0) {
      throw Error(ErrorCode::LightlikeTangent, "leaf is not spacelike at a particle position");
    }
    leaf.events.push_back(MinkowskiPoint::in_1d(foliation.height(s, q[j], piece), q[j]));
    leaf.slope.push_back(f1);
    leaf.lapse.push_back(foliation.lapse(s, q[j], piece));
    const double inv = 1.0 / std::sqrt(1.0 - f1 * f1);
    leaf.normal.push_back({inv, -f1 * inv, 0.0, 0.0});
  }
  return leaf;
}

std::vector<int> pieces_for_sides(const Foliation& foliation, double s, std::span<const double> q,
                                  std::span<const Side> sides) {
  std::vector<int> pieces;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const Side side = j < sides.size() ? sides[j] : Side::Smooth;
    pieces.push_back(foliation.piece_for(s, q[j], side));
  }
  return pieces;
}

std::vector<Side> smooth_sides(std::size_t particles) {
  return std::vector<Side>(particles, Side::Smooth);
}

std::vector<MinkowskiPoint> ConfigurationChart::to_spacetime(double s, std::span<const double> q,
                                                             std::span<const Side> sides) const {
  const auto pieces = pieces_for_sides(*foliation_, s, q, sides);
  return place_on_leaf(*foliation_, s, q, pieces).events;
}

double ConfigurationChart::leaf_label(const MinkowskiPoint& event, double s_lo, double s_hi,
                                      double tol) const {
  const double x = event.x[0];
  auto below = [&](double s) { return foliation_->height(s, x) < event.t; };
  if (!below(s_lo) || below(s_hi)) {
    throw Error(ErrorCode::OutOfDomain, "event is not between the bracketing leaves");
  }
  while (s_hi - s_lo > tol * (1.0 + std::abs(s_lo))) {
    const double mid = 0.5 * (s_lo + s_hi);
    if (below(mid)) s_lo = mid; else s_hi = mid;
  }
  return 0.5 * (s_lo + s_hi);
}

// -------------------------------------------------------------- guidance

std::vector<Covector> guidance_velocity(const MultiTimeWaveFunction& psi,
                                        const LeafConfiguration& leaf) {
  require_one_dimensional(psi);
  const CurrentTensor T = current_tensor(psi, leaf.events);
  double scale = T.max_abs();
  for (const auto& n : leaf.normal) scale *= n[0];
  std::vector<Covector> out;
  for (int j = 0; j < psi.particle_count(); ++j) {
    const Covector v = T.contract_except(leaf.normal, j);
    if (!(v[0] > 1e-14 * scale) || scale == 0.0) {
      throw Error(ErrorCode::NullCurrent, "guidance vector vanishes (node of the current)");
    }
    out.push_back({1.0, v[1] / v[0], 0.0, 0.0});
  }
  return out;
}

std::vector<Covector> guidance_velocity(const MultiTimeWaveFunction& psi, const Foliation& foliation,
                                        double s, std::span<const double> q,
                                        std::span<const Side> sides) {
  const auto pieces = pieces_for_sides(foliation, s, q, sides);
  return guidance_velocity(psi, place_on_leaf(foliation, s, q, pieces));
}

double rho_sigma(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf) {
  require_one_dimensional(psi);
  const CurrentTensor T = current_tensor(psi, leaf.events);
  const double rho = T.contract_all(leaf.normal);
  double scale = T.max_abs();
  for (const auto& n : leaf.normal) scale *= n[0];
  if (rho < -1e-10 * std::max(scale, 1.0)) {
    throw Error(ErrorCode::NegativeDensity, "leaf density is negative");
  }
  return std::max(rho, 0.0);
}

double rho_sigma(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                 std::span<const double> q, std::span<const Side> sides) {
  const auto pieces = pieces_for_sides(foliation, s, q, sides);
  return rho_sigma(psi, place_on_leaf(foliation, s, q, pieces));
}

double chart_velocity_component(double v, double slope, double lapse) {
  // dt = lapse ds + slope dq and dq = v dt along the world line.
  return v * lapse / (1.0 - v * slope);
}

std::vector<double> ChartCurrent::velocity() const {
  std::vector<double> v(jvec.size(), 0.0);
  if (j0 > 0.0) {
    for (std::size_t i = 0; i < jvec.size(); ++i) v[i] = jvec[i] / j0;
  }
  return v;
}

std::vector<double> ChartCurrent::as_vector() const {
  std::vector<double> out{j0};
  out.insert(out.end(), jvec.begin(), jvec.end());
  return out;
}

ChartCurrent chart_current(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf) {
  require_one_dimensional(psi);
  const CurrentTensor T = current_tensor(psi, leaf.events);
  ChartCurrent out;
  out.s = leaf.s;
  out.q = leaf.q;
  out.pieces = leaf.pieces;

  double scale = T.max_abs();
  for (const auto& n : leaf.normal) scale *= n[0];
  const double rho = T.contract_all(leaf.normal);
  if (rho < -1e-10 * std::max(scale, 1.0)) {
    throw Error(ErrorCode::NegativeDensity, "leaf density is negative");
  }
  double metric_factor = 1.0;
  for (double f1 : leaf.slope) metric_factor *= std::sqrt(1.0 - f1 * f1);
  out.j0 = metric_factor * std::max(rho, 0.0);

  for (int j = 0; j < psi.particle_count(); ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Covector V = T.contract_except(leaf.normal, j);
    if (!(V[0] > 1e-14 * scale) || scale == 0.0) {
      throw Error(ErrorCode::NullCurrent, "guidance vector vanishes (node of the current)");
    }
    const double v = V[1] / V[0];
    out.jvec.push_back(out.j0 * chart_velocity_component(v, leaf.slope[sj], leaf.lapse[sj]));
  }
  return out;
}

ChartCurrent chart_current(const MultiTimeWaveFunction& psi, const Foliation& foliation, double s,
                           std::span<const double> q, std::span<const Side> sides) {
  const auto pieces = pieces_for_sides(foliation, s, q, sides);
  return chart_current(psi, place_on_leaf(foliation, s, q, pieces));
}

// ------------------------------------------------------------------- forms

int permutation_sign(std::span<const int> indices) {
  std::vector<int> v(indices.begin(), indices.end());
  int sign = 1;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (v[i] == v[j]) return 0;
      if (v[i] > v[j]) sign = -sign;
    }
  }
  return sign;
}

std::vector<std::vector<int>> increasing_index_sets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

double DifferentialForm::component(std::span<const int> indices) const {
  const int sign = permutation_sign(indices);
  if (sign == 0) return 0.0;
  std::vector<int> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  const auto it = std::lower_bound(index_sets.begin(), index_sets.end(), sorted);
  if (it == index_sets.end() || *it != sorted) return 0.0;
  return sign * values[static_cast<std::size_t>(it - index_sets.begin())];
}

double DifferentialForm::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

DifferentialForm current_form_J(const CurrentTensor& T) {
  const int d = T.spatial_dim;
  const int N = T.particles;
  const int b = d + 1;
  DifferentialForm J;
  J.dimension = b * N;
  J.degree = d * N;
  J.index_sets = increasing_index_sets(J.dimension, J.degree);
  J.values.assign(J.index_sets.size(), 0.0);
  // Moving the particle indices in front of the dN free indices.
  const int sign = ((d * N * (N - 1) / 2) % 2 == 0) ? 1 : -1;

  std::vector<int> full(static_cast<std::size_t>(J.dimension));
  std::vector<int> mu(static_cast<std::size_t>(N));
  for (std::size_t set = 0; set < J.index_sets.size(); ++set) {
    double value = 0.0;
    for (std::size_t flat = 0; flat < T.components.size(); ++flat) {
      std::size_t rem = flat;
      for (int j = N - 1; j >= 0; --j) {
        mu[static_cast<std::size_t>(j)] = static_cast<int>(rem % static_cast<std::size_t>(b));
        rem /= static_cast<std::size_t>(b);
      }
      for (int j = 0; j < N; ++j) full[static_cast<std::size_t>(j)] = b * j + mu[static_cast<std::size_t>(j)];
      std::copy(J.index_sets[set].begin(), J.index_sets[set].end(), full.begin() + N);
      const int eps = permutation_sign(full);
      if (eps != 0) value += eps * T.components[flat];
    }
    J.values[set] = sign * value;
  }
  return J;
}

DifferentialForm current_form_J(const MultiTimeWaveFunction& psi,
                                std::span<const MinkowskiPoint> config) {
  return current_form_J(current_tensor(psi, config));
}

DifferentialForm pushforward_form(const MultiTimeWaveFunction& psi, const LeafConfiguration& leaf) {
  require_one_dimensional(psi);
  const int N = psi.particle_count();
  const DifferentialForm J = current_form_J(psi, leaf.events);

  // d(t_j, x_j) / d(s, q_1, ..., q_N)
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * N, N + 1);
  for (int j = 0; j < N; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    jac(2 * j, 0) = leaf.lapse[sj];
    jac(2 * j, j + 1) = leaf.slope[sj];
    jac(2 * j + 1, j + 1) = 1.0;
  }

  DifferentialForm out;
  out.dimension = N + 1;
  out.degree = N;
  out.index_sets = increasing_index_sets(N + 1, N);
  out.values.assign(out.index_sets.size(), 0.0);
  Eigen::MatrixXd minor(N, N);
  for (std::size_t a = 0; a < out.index_sets.size(); ++a) {
    double value = 0.0;
    for (std::size_t k = 0; k < J.index_sets.size(); ++k) {
      if (J.values[k] == 0.0) continue;
      for (int r = 0; r < N; ++r) {
        for (int c = 0; c < N; ++c) {
          minor(r, c) = jac(J.index_sets[k][static_cast<std::size_t>(r)],
                            out.index_sets[a][static_cast<std::size_t>(c)]);
        }
      }
      value += J.values[k] * minor.determinant();
    }
    out.values[a] = value;
  }
  return out;
}

DifferentialForm chart_current_form(const ChartCurrent& current) {
  const auto components = current.as_vector();
  const int n = static_cast<int>(components.size());
  DifferentialForm out;
  out.dimension = n;
  out.degree = n - 1;
  out.index_sets = increasing_index_sets(n, n - 1);
  out.values.assign(out.index_sets.size(), 0.0);
  std::vector<int> full(static_cast<std::size_t>(n));
  for (std::size_t a = 0; a < out.index_sets.size(); ++a) {
    const auto& set = out.index_sets[a];
    int missing = 0;
    while (std::find(set.begin(), set.end(), missing) != set.end()) ++missing;
    full[0] = missing;
    std::copy(set.begin(), set.end(), full.begin() + 1);
    out.values[a] = permutation_sign(full) * components[static_cast<std::size_t>(missing)];
  }
  return out;
}

PushforwardReport pushforward_identity_check(const MultiTimeWaveFunction& psi,
                                             const Foliation& foliation, double s,
                                             std::span<const double> q,
                                             std::span<const Side> sides) {
  std::vector<int> pieces;
  try {
    pieces = pieces_for_sides(foliation, s, q, sides);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::KinkWithoutSide) {
      throw Error(ErrorCode::OnKinkSet, "pushforward of J is undefined on the kink set");
    }
    throw;
  }
  const LeafConfiguration leaf = place_on_leaf(foliation, s, q, pieces);
  PushforwardReport report;
  report.pushed = pushforward_form(psi, leaf);
  report.expected = chart_current_form(chart_current(psi, leaf));
  const double scale = std::max(report.expected.max_abs(), 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < report.pushed.values.size(); ++i) {
    worst = std::max(worst, std::abs(report.pushed.values[i] - report.expected.values[i]));
  }
  report.residual = worst / scale;
  return report;
}

// --------------------------------------------------------- current condition

std::vector<double> KinkHypersurface::gradient(const Foliation& foliation, int particles,
                                               double s) const {
  std::vector<double> g(static_cast<std::size_t>(particles + 1), 0.0);
  g[0] = -foliation.kink_velocity(static_cast<std::size_t>(kink), s);
  g[static_cast<std::size_t>(slot + 1)] = 1.0;
  return g;
}

std::vector<KinkHypersurface> kink_hypersurfaces(const Foliation& foliation, int particles) {
  std::vector<KinkHypersurface> out;
  for (int j = 0; j < particles; ++j) {
    for (std::size_t k = 0; k < foliation.kink_count(); ++k) {
      out.push_back({j, static_cast<int>(k)});
    }
  }
  return out;
}

CurrentConditionReport compare_fluxes(const ChartCurrent& left, const ChartCurrent& right,
                                      const std::vector<double>& normal_gradient,
                                      const std::optional<Eigen::MatrixXd>& aux_product) {
  const auto n = static_cast<Eigen::Index>(normal_gradient.size());
  const Eigen::Map<const Eigen::VectorXd> grad(normal_gradient.data(), n);
  const auto jl_vec = left.as_vector();
  const auto jr_vec = right.as_vector();
  const Eigen::Map<const Eigen::VectorXd> jl(jl_vec.data(), n);
  const Eigen::Map<const Eigen::VectorXd> jr(jr_vec.data(), n);

  CurrentConditionReport report;
  report.s = left.s;
  report.q = left.q;
  if (aux_product) {
    // Normal w.r.t. G: n_K = G^{-1} grad, paired with j through G.
    const Eigen::VectorXd nk = aux_product->ldlt().solve(grad);
    report.flux_left = nk.dot(*aux_product * jl);
    report.flux_right = nk.dot(*aux_product * jr);
  } else {
    report.flux_left = grad.dot(jl);
    report.flux_right = grad.dot(jr);
  }
  const double big = std::max(std::abs(report.flux_left), std::abs(report.flux_right));
  const double scale = std::max({jl.cwiseAbs().maxCoeff(), jr.cwiseAbs().maxCoeff(), 1e-300});
  report.null_flux = big <= 1e-13 * scale;
  report.mismatch = report.null_flux ? 0.0 : std::abs(report.flux_left - report.flux_right) / big;
  report.same_sign = !report.null_flux && (report.flux_left > 0.0) == (report.flux_right > 0.0);
  return report;
}

CurrentConditionReport current_condition_check(const MultiTimeWaveFunction& psi,
                                               const Foliation& foliation, double s,
                                               std::span<const double> q,
                                               const std::optional<Eigen::MatrixXd>& aux_product,
                                               double kink_tol) {
  const int N = psi.particle_count();
  int slot = -1;
  int kink = -1;
  for (int j = 0; j < N; ++j) {
    const int k = foliation.kink_at(s, q[static_cast<std::size_t>(j)], kink_tol);
    if (k < 0) continue;
    if (slot >= 0) throw Error(ErrorCode::CornerPoint, "more than one particle on the kink set");
    slot = j;
    kink = k;
  }
  if (slot < 0) throw Error(ErrorCode::NotOnKinkSet, "no particle lies on a kink");

  std::vector<int> pieces;
  for (int j = 0; j < N; ++j) {
    pieces.push_back(j == slot ? kink : foliation.piece_of(s, q[static_cast<std::size_t>(j)]));
  }
  const ChartCurrent jl = chart_current(psi, place_on_leaf(foliation, s, q, pieces));
  pieces[static_cast<std::size_t>(slot)] = kink + 1;
  const ChartCurrent jr = chart_current(psi, place_on_leaf(foliation, s, q, pieces));

  const KinkHypersurface surface{slot, kink};
  CurrentConditionReport report =
      compare_fluxes(jl, jr, surface.gradient(foliation, N, s), aux_product);
  report.slot = slot;
  report.kink = kink;
  return report;
}

}  // namespace hbdm
