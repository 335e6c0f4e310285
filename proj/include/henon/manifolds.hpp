#pragma once

#include <string>
#include <utility>
#include <vector>

#include "henon/green.hpp"
#include "henon/map_core.hpp"
#include "henon/periodic.hpp"

namespace henon {

enum class ChartSide { Unstable, Stable };

const char* to_string(ChartSide side);

// Linearizing chart psi of W^u or W^s at one point of a saddle cycle, with
// F(psi(t)) = psi(lambda t), F = f^k on the unstable side and f^{-k} on the
// stable side. The stable chart is the unstable chart of the swapped inverse
// map, so all series work happens in "dynamic" coordinates; `swapped` says
// whether outputs must be swapped back.
struct ManifoldChart {
  ChartSide side = ChartSide::Unstable;
  PeriodicOrbit base;
  int base_index = 0;
  ComposedMap dynamics;
  bool swapped = false;
  Complex lambda{};
  Complex other_eigenvalue{};
  // coeffs[0] is the base point, coeffs[m] the t^m coefficient (dynamic coordinates).
  std::vector<Point2> coeffs;
  double r0 = 0.0;
  double tol_chart = 0.0;

  int order() const { return static_cast<int>(coeffs.size()) - 1; }
  int period() const { return base.period(); }
  Point2 base_point() const { return base.points[base_index]; }
};

struct ChartOptions {
  int order = 30;
  // Target for sup_{|t|<=r0} |F(psi(t)) - psi(lambda t)|.
  double target_residual = 1e-11;
  double margin = 1e-3;
};

ManifoldChart linearize(const ComposedMap& map, const PeriodicOrbit& saddle, ChartSide side, int base_index = 0,
                        const ChartOptions& opts = {});

// Truncated series in dynamic coordinates (no swap), for |t| within range.
Point2 series_eval(const ManifoldChart& chart, Complex t);
Point2 series_derivative(const ManifoldChart& chart, Complex t);

// sup of |F(series(t)) - series(lambda t)| over `samples` points on |t| = radius.
double chart_residual(const ManifoldChart& chart, double radius, int samples = 64);

// Global evaluation psi(t) = F^m(psi(lambda^{-m} t)) with the minimal m
// bringing the argument inside r0. Throws Overflow beyond the float range.
Point2 chart_eval(const ManifoldChart& chart, Complex t);
// The same with an explicit m (must bring the argument inside r0 * |lambda|).
Point2 chart_eval_forced(const ManifoldChart& chart, Complex t, int m);
// Point and tangent d psi / dt.
std::pair<Point2, Point2> chart_eval_with_derivative(const ManifoldChart& chart, Complex t);
int chart_push_count(const ManifoldChart& chart, Complex t);

// Raster of G+ o psi (unstable side) or G- o psi (stable side) over
// t in [-half_width, half_width]^2 with Laplacian masses attached.
RasterGrid green_on_chart(const ComposedMap& map, const ManifoldChart& chart, double half_width, int resolution,
                          const RasterOptions& opts);

struct HomoclinicPoint {
  Complex s{};  // unstable parameter
  Complex t{};  // stable parameter
  Point2 point;
  double residual = 0.0;
  bool transversal = true;
  double min_singular = 0.0;
  double max_im = 0.0;
  bool real = false;
  bool bounded_forward = false;
  bool bounded_backward = false;
};

struct IntersectionOptions {
  // Log-polar seed annuli, in units of each chart's r0. Upper bounds default
  // to |lambda|^M r0 with M given below.
  double s_inner = 1.0;
  int s_fundamental_domains = 3;
  double t_inner = 1.0;
  int t_fundamental_domains = 2;
  int radial_samples = 6;
  int angular_samples = 12;
  double tol = 1e-9;
  int newton_max = 40;
  // Minimum singular value of the column-normalized [psi_u', -psi_s'].
  double transversality_threshold = 1e-6;
  double tol_im = 1e-6;
  double dedup_eps = 1e-7;
  int bounded_horizon = 100;
  int threads = 1;
};

struct IntersectionStats {
  std::size_t seeds = 0;
  std::size_t converged = 0;
  std::size_t trivial = 0;
  std::size_t duplicates = 0;
  std::size_t rejected_unbounded = 0;
  double s_max = 0.0;
  double t_max = 0.0;
};

struct IntersectionSearch {
  std::vector<HomoclinicPoint> points;
  IntersectionStats stats;
};

// Zeros of psi_u(s) - psi_s(t) by Newton over log-polar seeds. When both
// charts sit on the same point the trivial solution (0, 0) is excluded.
IntersectionSearch find_intersections(const ComposedMap& map, const ManifoldChart& unstable,
                                      const ManifoldChart& stable, const IntersectionOptions& opts = {});

// Refines a single seed (s, t); returns nullopt when Newton fails.
std::optional<HomoclinicPoint> refine_intersection(const ManifoldChart& unstable, const ManifoldChart& stable,
                                                   Complex s, Complex t, const IntersectionOptions& opts);

// Generates the forward orbit through the stable chart and the backward
// orbit through the unstable chart (both numerically contracting) and
// checks every point up to `horizon` lies in the filtration bidisk while
// consecutive points agree with one application of f.
std::pair<bool, bool> chart_orbit_bounded(const ComposedMap& map, const ManifoldChart& unstable,
                                          const ManifoldChart& stable, const HomoclinicPoint& hit, int horizon);

}  // namespace henon
