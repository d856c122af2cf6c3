#include "hbdm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hbdm/error.hpp"
#include "hbdm/io.hpp"

namespace hbdm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double proper_time_or_negative(const LeafWithKinks& surface, double u, double tp, double xp) {
  const double dt = tp - surface.height(u);
  const double dx = xp - u;
  if (dt < std::abs(dx)) return -1.0;
  return std::sqrt(std::max(0.0, (dt - dx) * (dt + dx)));
}

// Causal margin g(u) = t_p - f(u) - |u - x_p|, nonnegative exactly on the
// surface points causally below p.
double causal_margin(const LeafWithKinks& surface, double u, double tp, double xp) {
  return tp - surface.height(u) - std::abs(u - xp);
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::LightlikeTangent: return "LightlikeTangent";
    case ErrorCode::KinkWithoutSide: return "KinkWithoutSide";
    case ErrorCode::NotInFuture: return "NotInFuture";
    case ErrorCode::BisectionFailure: return "BisectionFailure";
    case ErrorCode::SpacelikeViolation: return "SpacelikeViolation";
    case ErrorCode::InvalidFamily: return "InvalidFamily";
    case ErrorCode::NonRealComponent: return "NonRealComponent";
    case ErrorCode::NullCurrent: return "NullCurrent";
    case ErrorCode::NegativeDensity: return "NegativeDensity";
    case ErrorCode::OnKinkSet: return "OnKinkSet";
    case ErrorCode::NotOnKinkSet: return "NotOnKinkSet";
    case ErrorCode::CornerPoint: return "CornerPoint";
    case ErrorCode::EnvelopeViolation: return "EnvelopeViolation";
    case ErrorCode::DegenerateField: return "DegenerateField";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string_view to_string(Side side) noexcept {
  switch (side) {
    case Side::Smooth: return "smooth";
    case Side::Left: return "left";
    case Side::Right: return "right";
  }
  return "smooth";
}

double minkowski_square(const MinkowskiPoint& p, const MinkowskiPoint& q) {
  const double dt = p.t - q.t;
  double s = dt * dt;
  for (int i = 0; i < p.dim; ++i) {
    const double dx = p.x[static_cast<std::size_t>(i)] - q.x[static_cast<std::size_t>(i)];
    s -= dx * dx;
  }
  return s;
}

MinkowskiPoint boost(const MinkowskiPoint& p, double rapidity, int axis) {
  MinkowskiPoint out = p;
  const double ch = std::cosh(rapidity);
  const double sh = std::sinh(rapidity);
  const auto a = static_cast<std::size_t>(axis);
  out.t = ch * p.t + sh * p.x[a];
  out.x[a] = sh * p.t + ch * p.x[a];
  return out;
}

double UnitNormal::norm_squared() const {
  double s = upper[0] * upper[0];
  for (int i = 1; i <= dim; ++i) s -= upper[static_cast<std::size_t>(i)] * upper[static_cast<std::size_t>(i)];
  return s;
}

double UnitNormal::rapidity() const { return std::acosh(std::max(1.0, upper[0])); }

UnitNormal graph_normal(std::span<const double> gradient, Side side) {
  UnitNormal n;
  n.dim = static_cast<int>(gradient.size());
  n.side = side;
  double g2 = 0.0;
  for (double g : gradient) g2 += g * g;
  if (g2 >= 1.0) {
    throw Error(ErrorCode::LightlikeTangent, "graph gradient is not spacelike");
  }
  const double inv = 1.0 / std::sqrt(1.0 - g2);
  n.upper[0] = inv;
  for (std::size_t i = 0; i < gradient.size(); ++i) n.upper[i + 1] = gradient[i] * inv;
  return n;
}

// ---------------------------------------------------------------- leaves

LeafWithKinks::LeafWithKinks(HeightFn height, SlopeFn slope, std::vector<double> kink_loci,
                             double margin)
    : height_(std::move(height)), slope_(std::move(slope)), kinks_(std::move(kink_loci)),
      margin_(margin) {
  std::sort(kinks_.begin(), kinks_.end());
}

LeafWithKinks LeafWithKinks::flat(double t0, double margin) {
  return LeafWithKinks([t0](double) { return t0; }, [](double, Side) { return 0.0; }, {}, margin);
}

LeafWithKinks LeafWithKinks::wedge(double a, double apex_x, double apex_t, double margin) {
  if (std::abs(a) > 1.0 - margin) {
    throw Error(ErrorCode::SpacelikeViolation, "wedge slope exceeds the spacelike margin");
  }
  auto height = [=](double x) { return apex_t - a * std::abs(x - apex_x); };
  auto slope = [=](double x, Side side) {
    const bool left = x < apex_x || (x == apex_x && side == Side::Left);
    return left ? a : -a;
  };
  std::vector<double> kinks;
  if (a != 0.0) kinks.push_back(apex_x);
  return LeafWithKinks(height, slope, std::move(kinks), margin);
}

LeafWithKinks LeafWithKinks::bump(double amplitude, double width, double t0, double margin) {
  auto height = [=](double x) { return t0 + amplitude * std::exp(-(x * x) / (width * width)); };
  auto slope = [=](double x, Side) {
    return -2.0 * amplitude * x / (width * width) * std::exp(-(x * x) / (width * width));
  };
  LeafWithKinks leaf(height, slope, {}, margin);
  // max |f'| = |A| sqrt(2/e) / w
  if (std::abs(amplitude) * std::sqrt(2.0 / std::exp(1.0)) / width > 1.0 - margin) {
    throw Error(ErrorCode::SpacelikeViolation, "bump is too steep for the spacelike margin");
  }
  return leaf;
}

bool LeafWithKinks::is_kink(double x) const {
  return std::any_of(kinks_.begin(), kinks_.end(),
                     [x](double k) { return std::abs(k - x) <= 1e-12 * (1.0 + std::abs(x)); });
}

double LeafWithKinks::slope(double x, Side side) const {
  if (side == Side::Smooth && is_kink(x)) {
    throw Error(ErrorCode::KinkWithoutSide, "slope requested at a kink without a side");
  }
  return slope_(x, side);
}

std::pair<double, double> LeafWithKinks::one_sided_slopes(std::size_t kink) const {
  const double x = kinks_.at(kink);
  return {slope_(x, Side::Left), slope_(x, Side::Right)};
}

void LeafWithKinks::check_spacelike(double lo, double hi, int samples) const {
  const double bound = 1.0 - margin_ + 1e-15;
  auto check = [&](double value, double x) {
    if (std::abs(value) > bound) {
      std::ostringstream os;
      os << "|f'| = " << std::abs(value) << " at x = " << x << " exceeds 1 - margin";
      throw Error(ErrorCode::SpacelikeViolation, os.str());
    }
  };
  for (int i = 0; i < samples; ++i) {
    const double x = lo + (hi - lo) * i / std::max(1, samples - 1);
    if (is_kink(x)) continue;
    check(slope_(x, Side::Smooth), x);
  }
  for (double k : kinks_) {
    check(slope_(k, Side::Left), k);
    check(slope_(k, Side::Right), k);
  }
}

// ------------------------------------------------------------- foliations

int Foliation::piece_of(double s, double x) const {
  const std::size_t n = kink_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (x <= kink_position(i, s)) return static_cast<int>(i);
  }
  return static_cast<int>(n);
}

int Foliation::kink_at(double s, double x, double tolerance) const {
  const std::size_t n = kink_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(x - kink_position(i, s)) <= tolerance * (1.0 + std::abs(x))) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int Foliation::piece_for(double s, double x, Side side) const {
  const int k = kink_at(s, x);
  if (k < 0) return piece_of(s, x);
  switch (side) {
    case Side::Smooth:
      throw Error(ErrorCode::KinkWithoutSide, "point lies on a kink; a side tag is required");
    case Side::Left: return k;
    case Side::Right: return k + 1;
  }
  return k;
}

LeafWithKinks Foliation::leaf(double s) const {
  std::vector<double> kinks;
  for (std::size_t i = 0; i < kink_count(); ++i) kinks.push_back(kink_position(i, s));
  auto height_fn = [this, s](double x) { return this->height(s, x); };
  auto slope_fn = [this, s](double x, Side side) {
    const int k = kink_at(s, x);
    const int piece = k < 0 ? piece_of(s, x) : (side == Side::Right ? k + 1 : k);
    return this->slope(s, x, piece);
  };
  return LeafWithKinks(height_fn, slope_fn, std::move(kinks), margin());
}

WedgeFoliation::WedgeFoliation(double a, double v, double c, double margin)
    : a_(a), v_(v), c_(c), margin_(margin) {
  if (!(std::abs(a) <= 1.0 - margin)) {
    throw Error(ErrorCode::InvalidFamily, "wedge slope violates the spacelike margin");
  }
  if (!(c - std::abs(a * v) > 0.0)) {
    throw Error(ErrorCode::InvalidFamily, "leaves are not ordered: need c - |a v| > 0");
  }
}

double WedgeFoliation::s_min() const { return -kInf; }
double WedgeFoliation::s_max() const { return kInf; }

double WedgeFoliation::kink_position(std::size_t, double s) const { return v_ * s; }
double WedgeFoliation::kink_velocity(std::size_t, double) const { return v_; }

double WedgeFoliation::orientation(double, double, int piece) const {
  return piece <= 0 ? 1.0 : -1.0;
}

double WedgeFoliation::height(double s, double x, int piece) const {
  return c_ * s + a_ * orientation(s, x, piece) * (x - v_ * s);
}

double WedgeFoliation::slope(double s, double x, int piece) const {
  return a_ * orientation(s, x, piece);
}

double WedgeFoliation::lapse(double s, double x, int piece) const {
  return c_ - a_ * orientation(s, x, piece) * v_;
}

UnitNormal leaf_normal(const Foliation& foliation, double s, double x, Side side) {
  const int piece = foliation.piece_for(s, x, side);
  const double f1 = foliation.slope(s, x, piece);
  if (std::abs(f1) > 1.0 - foliation.margin() + 1e-15) {
    throw Error(ErrorCode::LightlikeTangent, "leaf slope beyond the spacelike margin");
  }
  const std::array<double, 1> grad{f1};
  Side tag = side;
  if (foliation.kink_at(s, x) < 0) tag = Side::Smooth;
  return graph_normal(grad, tag);
}

std::pair<double, double> kink_rapidities(const Foliation& foliation, std::size_t kink, double s) {
  const double xk = foliation.kink_position(kink, s);
  const double vk = foliation.kink_velocity(kink, s);
  auto one_side = [&](int piece) {
    const double f1 = foliation.slope(s, xk, piece);
    const double lapse = foliation.lapse(s, xk, piece);
    const double k0 = lapse + f1 * vk;
    const double k1 = vk;
    const double kk = k0 * k0 - k1 * k1;
    if (kk <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double inv = 1.0 / std::sqrt(1.0 - f1 * f1);
    const double dot = (k0 * inv - k1 * f1 * inv) / std::sqrt(kk);
    return std::acosh(std::max(1.0, dot));
  };
  const int left = static_cast<int>(kink);
  return {one_side(left), one_side(left + 1)};
}

// ------------------------------------------------------ Lorentzian distance

ProperTimeMaximum maximize_proper_time(const LeafWithKinks& surface, const MinkowskiPoint& p,
                                       double u_lo, double u_hi, const DistanceOptions& options) {
  const double tp = p.t;
  const double xp = p.x[0];
  const double g0 = causal_margin(surface, xp, tp, xp);
  if (!(g0 > 0.0)) {
    throw Error(ErrorCode::NotInFuture, "point is not in the causal future of the surface");
  }
  // |f'| <= 1 - margin bounds the causal interval by g0 / margin.
  const double reach = g0 / surface.margin() * (1.0 + 1e-9) + 1e-12;
  auto edge = [&](double inner, double outer) {
    for (int i = 0; i < 200 && std::abs(outer - inner) > 1e-15 * (1.0 + std::abs(inner)); ++i) {
      const double mid = 0.5 * (inner + outer);
      if (causal_margin(surface, mid, tp, xp) >= 0.0) inner = mid; else outer = mid;
    }
    return inner;
  };
  double lo = edge(xp, xp - reach);
  double hi = edge(xp, xp + reach);
  lo = std::max(lo, u_lo);
  hi = std::min(hi, u_hi);
  if (!(lo <= hi)) {
    throw Error(ErrorCode::NotInFuture, "no causally related surface point in the search range");
  }

  const int n = std::max(3, options.seeds);
  const double du = (hi - lo) / (n - 1);
  int best = -1;
  double best_tau = -1.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i == n - 1) ? hi : lo + du * i;
    const double tau = proper_time_or_negative(surface, u, tp, xp);
    if (tau > best_tau) {
      best_tau = tau;
      best = i;
    }
  }
  if (best < 0 || best_tau < 0.0) {
    throw Error(ErrorCode::NotInFuture, "no causally related surface point in the search range");
  }

  // Golden-section refinement around the best seed.
  double a = std::max(lo, lo + du * (best - 1));
  double b = std::min(hi, lo + du * (best + 1));
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  auto tau_at = [&](double u) { return proper_time_or_negative(surface, u, tp, xp); };
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = tau_at(c);
  double fd = tau_at(d);
  while (b - a > options.argmax_tol * (1.0 + std::abs(a))) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = tau_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = tau_at(d);
    }
  }
  const double u_star = 0.5 * (a + b);
  const double tau_star = tau_at(u_star);
  ProperTimeMaximum out;
  if (tau_star >= best_tau) {
    out.tau = tau_star;
    out.argmax = u_star;
  } else {
    out.tau = best_tau;
    out.argmax = (best == n - 1) ? hi : lo + du * best;
  }
  return out;
}

double lorentzian_distance_to_surface(const LeafWithKinks& surface, const MinkowskiPoint& p,
                                      const DistanceOptions& options) {
  return maximize_proper_time(surface, p, -kInf, kInf, options).tau;
}

// -------------------------------------------------------- dn=0 foliations

namespace {

std::pair<double, ProperTimeMaximum> solve_level(const LeafWithKinks& initial, double s, double x,
                                                 double u_lo, double u_hi,
                                                 const Dn0Options& options) {
  auto distance = [&](double t) {
    try {
      return maximize_proper_time(initial, MinkowskiPoint::in_1d(t, x), u_lo, u_hi,
                                  options.distance)
          .tau;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotInFuture) return 0.0;
      throw;
    }
  };
  double lo = initial.height(x);
  double hi = lo + s;
  double d_hi = distance(hi);
  for (int i = 0; d_hi < s; ++i) {
    if (i > 60) throw Error(ErrorCode::BisectionFailure, "could not bracket the level set");
    lo = hi;
    hi += (hi - initial.height(x)) + s;
    d_hi = distance(hi);
  }
  if (distance(lo) > s) throw Error(ErrorCode::BisectionFailure, "level set not bracketed");
  while (hi - lo > options.bisection_tol) {
    const double mid = 0.5 * (lo + hi);
    if (distance(mid) < s) lo = mid; else hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  try {
    return {t, maximize_proper_time(initial, MinkowskiPoint::in_1d(t, x), u_lo, u_hi,
                                    options.distance)};
  } catch (const Error& e) {
    throw Error(ErrorCode::BisectionFailure, e.what());
  }
}

double slope_from(const LeafWithKinks& initial, double t, double x, double u) {
  return (x - u) / (t - initial.height(u));
}

}  // namespace

Dn0Foliation::Dn0Foliation(LeafWithKinks initial, std::vector<double> s_grid,
                           std::vector<double> x_grid, std::vector<Dn0Leaf> leaves,
                           Dn0Options options)
    : initial_(std::move(initial)), s_grid_(std::move(s_grid)), x_grid_(std::move(x_grid)),
      leaves_(std::move(leaves)), options_(options) {
  for (const auto& leaf : leaves_) {
    if (leaf.kinks.size() != leaves_.front().kinks.size()) uniform_kinks_ = false;
  }
}

std::size_t Dn0Foliation::kink_count() const {
  if (!uniform_kinks_) {
    throw Error(ErrorCode::Unsupported, "kink count changes between leaves");
  }
  return leaves_.front().kinks.size();
}

std::pair<std::size_t, double> Dn0Foliation::bracket(double s) const {
  const double eps = 1e-12 * (1.0 + std::abs(s));
  if (s < s_grid_.front() - eps || s > s_grid_.back() + eps) {
    throw Error(ErrorCode::OutOfDomain, "leaf label outside the tabulated range");
  }
  if (s_grid_.size() == 1) return {0, 0.0};
  auto it = std::upper_bound(s_grid_.begin(), s_grid_.end(), s);
  std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - s_grid_.begin()) - 1));
  i = std::min(i, s_grid_.size() - 2);
  const double w = (s - s_grid_[i]) / (s_grid_[i + 1] - s_grid_[i]);
  return {i, std::clamp(w, 0.0, 1.0)};
}

double Dn0Foliation::kink_position(std::size_t kink, double s) const {
  kink_count();
  const auto [i, w] = bracket(s);
  if (s_grid_.size() == 1) return leaves_[0].kinks.at(kink).x;
  return (1.0 - w) * leaves_[i].kinks.at(kink).x + w * leaves_[i + 1].kinks.at(kink).x;
}

double Dn0Foliation::kink_velocity(std::size_t kink, double s) const {
  kink_count();
  if (s_grid_.size() == 1) return 0.0;
  const auto [i, w] = bracket(s);
  (void)w;
  return (leaves_[i + 1].kinks.at(kink).x - leaves_[i].kinks.at(kink).x) /
         (s_grid_[i + 1] - s_grid_[i]);
}

std::pair<double, double> Dn0Foliation::piece_range(double s, int piece) const {
  const auto n = static_cast<int>(kink_count());
  auto split = [&](int kink) {
    const auto k = static_cast<std::size_t>(kink);
    auto mid = [&](const Dn0Leaf& leaf) {
      return 0.5 * (leaf.kinks.at(k).argmax_left + leaf.kinks.at(k).argmax_right);
    };
    if (s_grid_.size() == 1) return mid(leaves_[0]);
    const auto [i, w] = bracket(s);
    return (1.0 - w) * mid(leaves_[i]) + w * mid(leaves_[i + 1]);
  };
  const double lo = piece <= 0 ? -kInf : split(piece - 1);
  const double hi = piece >= n ? kInf : split(piece);
  return {lo, hi};
}

std::pair<double, ProperTimeMaximum> Dn0Foliation::level_point(double s, double x, double u_lo,
                                                               double u_hi) const {
  return solve_level(initial_, s, x, u_lo, u_hi, options_);
}

double Dn0Foliation::height(double s, double x, int piece) const {
  bracket(s);
  const auto [lo, hi] = piece_range(s, piece);
  return level_point(s, x, lo, hi).first;
}

double Dn0Foliation::slope(double s, double x, int piece) const {
  bracket(s);
  const auto [lo, hi] = piece_range(s, piece);
  const auto [t, m] = level_point(s, x, lo, hi);
  return slope_from(initial_, t, x, m.argmax);
}

double Dn0Foliation::lapse(double s, double x, int piece) const {
  bracket(s);
  const auto [lo, hi] = piece_range(s, piece);
  const auto [t, m] = level_point(s, x, lo, hi);
  return m.tau / (t - initial_.height(m.argmax));
}

std::shared_ptr<Dn0Foliation> build_dn0_foliation(const LeafWithKinks& initial,
                                                  std::vector<double> s_grid,
                                                  std::vector<double> x_grid, double tol,
                                                  Dn0Options options) {
  options.bisection_tol = tol;
  if (s_grid.empty() || x_grid.size() < 2) {
    throw Error(ErrorCode::OutOfDomain, "dn0 builder needs a nonempty s grid and >= 2 x points");
  }
  if (!std::is_sorted(s_grid.begin(), s_grid.end()) || s_grid.front() <= 0.0) {
    throw Error(ErrorCode::OutOfDomain, "s grid must be increasing and positive");
  }
  std::sort(x_grid.begin(), x_grid.end());
  const double bound = 1.0 - options.margin + 1e-15;

  std::vector<Dn0Leaf> leaves;
  leaves.reserve(s_grid.size());
  for (double s : s_grid) {
    Dn0Leaf leaf;
    leaf.s = s;
    for (double x : x_grid) {
      const auto [t, m] = solve_level(initial, s, x, -kInf, kInf, options);
      leaf.height.push_back(t);
      leaf.argmax.push_back(m.argmax);
      leaf.slope.push_back(slope_from(initial, t, x, m.argmax));
    }
    for (std::size_t k = 0; k + 1 < x_grid.size(); ++k) {
      const double dx = x_grid[k + 1] - x_grid[k];
      if (std::abs(leaf.argmax[k + 1] - leaf.argmax[k]) <= options.kink_jump_cells * dx) continue;
      const double u_mid = 0.5 * (leaf.argmax[k] + leaf.argmax[k + 1]);
      double lo = x_grid[k];
      double hi = x_grid[k + 1];
      while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double u = solve_level(initial, s, mid, -kInf, kInf, options).second.argmax;
        if (u < u_mid) lo = mid; else hi = mid;
      }
      const double u_left = solve_level(initial, s, lo, -kInf, kInf, options).second.argmax;
      const double u_right = solve_level(initial, s, hi, -kInf, kInf, options).second.argmax;
      const double split = 0.5 * (u_left + u_right);
      Dn0KinkLocus kink;
      kink.x = 0.5 * (lo + hi);
      const auto left = solve_level(initial, s, kink.x, -kInf, split, options);
      const auto right = solve_level(initial, s, kink.x, split, kInf, options);
      kink.t = 0.5 * (left.first + right.first);
      kink.argmax_left = left.second.argmax;
      kink.argmax_right = right.second.argmax;
      kink.slope_left = slope_from(initial, left.first, kink.x, left.second.argmax);
      kink.slope_right = slope_from(initial, right.first, kink.x, right.second.argmax);
      leaf.kinks.push_back(kink);
    }
    for (std::size_t k = 0; k < x_grid.size(); ++k) {
      if (std::abs(leaf.slope[k]) > bound) {
        std::ostringstream os;
        os << "reconstructed leaf s = " << s << " has |f'| = " << std::abs(leaf.slope[k])
           << " at x = " << x_grid[k];
        throw Error(ErrorCode::SpacelikeViolation, os.str());
      }
    }
    for (const auto& kink : leaf.kinks) {
      if (std::abs(kink.slope_left) > bound || std::abs(kink.slope_right) > bound) {
        throw Error(ErrorCode::SpacelikeViolation, "one-sided slope at a kink beyond the margin");
      }
    }
    leaves.push_back(std::move(leaf));
  }
  return std::make_shared<Dn0Foliation>(initial, std::move(s_grid), std::move(x_grid),
                                        std::move(leaves), options);
}

// ------------------------------------------------------------------ export

FoliationExport export_foliation(const Foliation& foliation, std::span<const double> s_grid,
                                 std::span<const double> x_grid) {
  CsvWriter leaves({"s", "x", "f", "is_kink"});
  CsvWriter kinks({"s", "x_kink", "rapidity_left", "rapidity_right"});

  if (const auto* dn0 = dynamic_cast<const Dn0Foliation*>(&foliation);
      dn0 != nullptr && !dn0->uniform_kink_count()) {
    throw Error(ErrorCode::Unsupported, "export of dn0 foliations with kink births");
  }

  for (double s : s_grid) {
    std::vector<std::pair<double, bool>> xs;
    for (double x : x_grid) xs.emplace_back(x, false);
    for (std::size_t i = 0; i < foliation.kink_count(); ++i) {
      xs.emplace_back(foliation.kink_position(i, s), true);
    }
    std::stable_sort(xs.begin(), xs.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    for (const auto& [x, is_kink] : xs) {
      const int piece = foliation.piece_of(s, x);
      leaves.row({s, x, foliation.height(s, x, piece), is_kink ? 1.0 : 0.0});
    }
    for (std::size_t i = 0; i < foliation.kink_count(); ++i) {
      const auto [rl, rr] = kink_rapidities(foliation, i, s);
      kinks.row({s, foliation.kink_position(i, s), rl, rr});
    }
  }
  return {leaves.str(), kinks.str()};
}

}  // namespace hbdm
