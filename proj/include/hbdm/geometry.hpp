#pragma once

// Minkowski space, spacelike leaves with kinks and foliations built from them.
//
// Leaves are graphs t = f(x) over a one-dimensional space. A foliation is a
// one-parameter family of such graphs indexed by a label s. Between two
// consecutive kinks a leaf is smooth; these smooth pieces are numbered
// 0..kink_count() from left to right, and every piece can be evaluated
// slightly past its own end (the smooth continuation across the kink). The
// integrator relies on that continuation while it brackets a crossing.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hbdm {

inline constexpr double kDefaultSpacelikeMargin = 0.02;

/// An event in (d+1)-dimensional Minkowski space, d <= 3, c = 1.
struct MinkowskiPoint {
  double t = 0.0;
  std::array<double, 3> x{};
  int dim = 1;

  static MinkowskiPoint in_1d(double t, double x) { return {t, {x, 0.0, 0.0}, 1}; }
};

/// (dt)^2 - |dx|^2, signature (+,-,...,-).
double minkowski_square(const MinkowskiPoint& p, const MinkowskiPoint& q);

/// Active boost along spatial axis `axis` with the given rapidity.
MinkowskiPoint boost(const MinkowskiPoint& p, double rapidity, int axis = 0);

enum class Side { Smooth, Left, Right };

std::string_view to_string(Side side) noexcept;

/// Future-pointing unit normal of a spacelike leaf, stored with the index up.
/// For a graph t = f(x) in 1+1 dimensions n^mu = (1, f') / sqrt(1 - f'^2).
struct UnitNormal {
  std::array<double, 4> upper{1.0, 0.0, 0.0, 0.0};
  int dim = 1;
  Side side = Side::Smooth;

  double lower(int mu) const { return mu == 0 ? upper[0] : -upper[static_cast<std::size_t>(mu)]; }
  double norm_squared() const;
  double rapidity() const;
};

/// Unit normal of a graph with spatial gradient `gradient` (length dim).
UnitNormal graph_normal(std::span<const double> gradient, Side side = Side::Smooth);

/// A spacelike graph t = f(x) over the real line with finitely many kinks.
class LeafWithKinks {
 public:
  using HeightFn = std::function<double(double)>;
  /// Spatial derivative; at a kink `side` selects the one-sided limit.
  using SlopeFn = std::function<double(double, Side)>;

  LeafWithKinks(HeightFn height, SlopeFn slope, std::vector<double> kink_loci,
                double margin = kDefaultSpacelikeMargin);

  static LeafWithKinks flat(double t0, double margin = kDefaultSpacelikeMargin);
  /// t = apex_t - a |x - apex_x|; a > 0 is a roof, a < 0 a valley.
  static LeafWithKinks wedge(double a, double apex_x, double apex_t,
                             double margin = kDefaultSpacelikeMargin);
  /// t = t0 + amplitude * exp(-x^2 / width^2); smooth.
  static LeafWithKinks bump(double amplitude, double width, double t0,
                            double margin = kDefaultSpacelikeMargin);

  double height(double x) const { return height_(x); }
  /// Throws KinkWithoutSide when x is a kink locus and side is Smooth.
  double slope(double x, Side side = Side::Smooth) const;
  const std::vector<double>& kink_loci() const { return kinks_; }
  std::pair<double, double> one_sided_slopes(std::size_t kink) const;
  double margin() const { return margin_; }
  bool is_kink(double x) const;

  /// Checks |f'| <= 1 - margin on [lo, hi] (including one-sided limits at
  /// kinks) on a uniform sample; throws SpacelikeViolation otherwise.
  void check_spacelike(double lo, double hi, int samples = 2001) const;

 private:
  HeightFn height_;
  SlopeFn slope_;
  std::vector<double> kinks_;
  double margin_;
};

/// One-parameter family of leaves s -> (x -> f_s(x)).
class Foliation {
 public:
  virtual ~Foliation() = default;

  virtual double s_min() const = 0;
  virtual double s_max() const = 0;
  virtual double margin() const { return kDefaultSpacelikeMargin; }

  virtual std::size_t kink_count() const = 0;
  virtual double kink_position(std::size_t kink, double s) const = 0;
  /// d x_kink / d s.
  virtual double kink_velocity(std::size_t kink, double s) const = 0;

  // Smooth continuation of piece `piece` of leaf s (see file comment).
  virtual double height(double s, double x, int piece) const = 0;
  virtual double slope(double s, double x, int piece) const = 0;
  /// d f_s(x) / d s at fixed x.
  virtual double lapse(double s, double x, int piece) const = 0;

  int piece_count() const { return static_cast<int>(kink_count()) + 1; }
  /// Piece containing x; a point exactly on a kink is assigned to the left.
  int piece_of(double s, double x) const;
  /// Piece selected by a side tag; throws KinkWithoutSide for an untagged
  /// point on a kink. Away from kinks the tag is irrelevant.
  int piece_for(double s, double x, Side side) const;
  /// Index of the kink at x (within tolerance), or -1.
  int kink_at(double s, double x, double tolerance = 1e-12) const;

  double height(double s, double x) const { return height(s, x, piece_of(s, x)); }

  /// Snapshot of leaf s as a standalone graph.
  LeafWithKinks leaf(double s) const;
};

/// f_s(x) = c s - a |x - v s|: a leaf family with one kink curve x = v s.
/// a = 0 gives a foliation without kinks.
class WedgeFoliation final : public Foliation {
 public:
  /// Throws InvalidFamily unless |a| <= 1 - margin and c - |a v| > 0.
  WedgeFoliation(double a, double v, double c, double margin = kDefaultSpacelikeMargin);

  static WedgeFoliation flat() { return WedgeFoliation(0.0, 0.0, 1.0); }

  using Foliation::height;

  double s_min() const override;
  double s_max() const override;
  double margin() const override { return margin_; }
  std::size_t kink_count() const override { return a_ == 0.0 ? 0 : 1; }
  double kink_position(std::size_t kink, double s) const override;
  double kink_velocity(std::size_t kink, double s) const override;
  double height(double s, double x, int piece) const override;
  double slope(double s, double x, int piece) const override;
  double lapse(double s, double x, int piece) const override;

  double a() const { return a_; }
  double v() const { return v_; }
  double c() const { return c_; }

 private:
  // +1 on the left piece, -1 on the right one.
  double orientation(double s, double x, int piece) const;

  double a_;
  double v_;
  double c_;
  double margin_;
};

/// Unit normal of leaf s at x. Throws LightlikeTangent when |f'| >= 1 - margin.
UnitNormal leaf_normal(const Foliation& foliation, double s, double x, Side side);

/// One-sided rapidities between the leaf normal and the kink-curve tangent
/// at kink `kink` of leaf s: {left, right}.
std::pair<double, double> kink_rapidities(const Foliation& foliation, std::size_t kink, double s);

// --- Lorentzian distance to a surface and the constant-distance foliation ---

struct DistanceOptions {
  int seeds = 2048;
  double argmax_tol = 1e-12;
};

struct ProperTimeMaximum {
  double tau = 0.0;
  double argmax = 0.0;  // abscissa of the maximizing surface point
};

/// Supremum of proper time tau(q, p) over surface points q causally below p,
/// with the search restricted to surface abscissae in [u_lo, u_hi].
/// Throws NotInFuture if no surface point in that range is causally below p.
ProperTimeMaximum maximize_proper_time(const LeafWithKinks& surface, const MinkowskiPoint& p,
                                       double u_lo, double u_hi,
                                       const DistanceOptions& options = {});

/// Lorentzian time separation of p from the surface (sup over the surface).
double lorentzian_distance_to_surface(const LeafWithKinks& surface, const MinkowskiPoint& p,
                                      const DistanceOptions& options = {});

struct Dn0Options {
  DistanceOptions distance{};
  double bisection_tol = 1e-10;
  /// Jump of the maximizer between neighbouring x-grid points, in grid cells,
  /// that flags a kink interval.
  double kink_jump_cells = 10.0;
  double margin = kDefaultSpacelikeMargin;
};

struct Dn0KinkLocus {
  double x = 0.0;
  double t = 0.0;
  double slope_left = 0.0;
  double slope_right = 0.0;
  double argmax_left = 0.0;
  double argmax_right = 0.0;
};

struct Dn0Leaf {
  double s = 0.0;
  std::vector<double> height;  // on the x grid
  std::vector<double> slope;
  std::vector<double> argmax;
  std::vector<Dn0KinkLocus> kinks;
};

/// Leaves of constant Lorentzian distance s from an initial surface.
///
/// The tabulated grid is produced by bisection in t; pointwise queries at
/// arbitrary (s, x) repeat the same bisection, so every evaluated point lies
/// on the level set to the bisection tolerance. Kink curves are interpolated
/// linearly between grid leaves; piece-wise queries need the kink count to be
/// the same on every leaf (Unsupported otherwise).
class Dn0Foliation final : public Foliation {
 public:
  Dn0Foliation(LeafWithKinks initial, std::vector<double> s_grid, std::vector<double> x_grid,
               std::vector<Dn0Leaf> leaves, Dn0Options options);

  using Foliation::height;

  double s_min() const override { return s_grid_.front(); }
  double s_max() const override { return s_grid_.back(); }
  double margin() const override { return options_.margin; }
  std::size_t kink_count() const override;
  double kink_position(std::size_t kink, double s) const override;
  double kink_velocity(std::size_t kink, double s) const override;
  double height(double s, double x, int piece) const override;
  double slope(double s, double x, int piece) const override;
  double lapse(double s, double x, int piece) const override;

  const LeafWithKinks& initial_surface() const { return initial_; }
  const std::vector<double>& s_grid() const { return s_grid_; }
  const std::vector<double>& x_grid() const { return x_grid_; }
  const std::vector<Dn0Leaf>& leaves() const { return leaves_; }
  bool uniform_kink_count() const { return uniform_kinks_; }

  /// Height of the level set through (s, x) with the maximizer confined to
  /// [u_lo, u_hi]; also returns the maximizer at that height.
  std::pair<double, ProperTimeMaximum> level_point(double s, double x, double u_lo,
                                                   double u_hi) const;

 private:
  std::pair<double, double> piece_range(double s, int piece) const;
  std::pair<std::size_t, double> bracket(double s) const;

  LeafWithKinks initial_;
  std::vector<double> s_grid_;
  std::vector<double> x_grid_;
  std::vector<Dn0Leaf> leaves_;
  Dn0Options options_;
  bool uniform_kinks_ = true;
};

/// Builds the constant-distance foliation on the given grids. Throws
/// BisectionFailure or SpacelikeViolation.
std::shared_ptr<Dn0Foliation> build_dn0_foliation(const LeafWithKinks& initial,
                                                  std::vector<double> s_grid,
                                                  std::vector<double> x_grid, double tol,
                                                  Dn0Options options = {});

// --- export ---

struct FoliationExport {
  std::string leaves_csv;  // s,x,f,is_kink
  std::string kinks_csv;   // s,x_kink,rapidity_left,rapidity_right
};

FoliationExport export_foliation(const Foliation& foliation, std::span<const double> s_grid,
                                 std::span<const double> x_grid);

}  // namespace hbdm
