#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "henon/extended.hpp"
#include "henon/map_core.hpp"

namespace henon {

// Escape region V+ = {|y| >= max(|x|, R)} for a normal-form map. Every factor
// maps V+ into itself while at least doubling |y|.
struct FiltrationCertificate {
  double radius = 0.0;
  // max over factors of rho(R) = (sum_{j<d} |c_j| R^{j-d} + |delta| R^{1-d}) / |c_d|
  double growth_ratio = 0.0;
  std::vector<double> factor_ratios;
  // Per full map step, |log|y_{n+1}| - d log|y_n|| is bounded by this on V+.
  double error_constant = 0.0;
  // Deterministic part of the same increment, from the leading coefficients.
  double leading_log_sum = 0.0;
  int degree = 2;

  bool in_escape_region(const Point2& z) const {
    const double ay = std::abs(z.y);
    return ay >= radius && ay >= std::abs(z.x);
  }
  bool in_bidisk(const Point2& z) const { return norm_max(z) <= radius; }
};

double filtration_ratio(const ElementaryFactor& factor, double radius);

// True when rho(R) < 1/2 and |c_d| R^{d-1} (1 - rho(R)) >= 2 for every factor.
bool filtration_holds(const ComposedMap& map, double radius);

// Certificate at an explicit radius; throws InvalidArgument if it does not hold.
FiltrationCertificate make_certificate(const ComposedMap& map, double radius);

// Smallest R = 2^k (k >= 0) for which the filtration holds.
FiltrationCertificate filtration_radius(const ComposedMap& map);

// Radius of a bidisk containing K: the larger of the forward radius and the
// radius for the swapped inverse.
double bounded_set_radius(const ComposedMap& map);

enum class GreenStatus {
  Escaped,
  BoundedUpToN,
  // The orbit neither entered the escape region nor ended inside the bidisk.
  Unresolved,
  // A non-finite value was met before the escape region was reached.
  Overflow,
};

const char* to_string(GreenStatus status);

struct GreenEstimate {
  double value = 0.0;
  int n_used = 0;
  double err_bound = std::numeric_limits<double>::infinity();
  GreenStatus status = GreenStatus::BoundedUpToN;
  int n_max = 0;
};

// Escaped(n) when the orbit enters V+ at step n <= n_max. BoundedUpToN when
// it does not and the orbit lies in the radius-R bidisk from step
// `bidisk_from` through n_max.
struct OrbitTest {
  GreenStatus status = GreenStatus::BoundedUpToN;
  int escape_step = -1;
  int bidisk_from = 0;
};

OrbitTest bounded_orbit_test(const ComposedMap& map, const Point2& z, int n_max, const FiltrationCertificate& cert);

enum class GreenSide { Plus, Minus };

// Holds certificates for both directions so repeated evaluations on the same
// map skip the radius search. G- is evaluated as G+ of the swapped inverse.
class GreenEvaluator {
 public:
  explicit GreenEvaluator(const ComposedMap& map);

  GreenEstimate plus(const Point2& z, double tol, int n_max) const;
  GreenEstimate minus(const Point2& z, double tol, int n_max) const;
  GreenEstimate eval(GreenSide side, const Point2& z, double tol, int n_max) const {
    return side == GreenSide::Plus ? plus(z, tol, n_max) : minus(z, tol, n_max);
  }

  // Same algorithm carried out in 113-bit arithmetic.
  GreenEstimate plus_extended(const Point2& z, double tol, int n_max) const;
  GreenEstimate minus_extended(const Point2& z, double tol, int n_max) const;

  OrbitTest forward_test(const Point2& z, int n_max) const;
  OrbitTest backward_test(const Point2& z, int n_max) const;

  const ComposedMap& map() const { return map_; }
  const ComposedMap& inverse_map() const { return inverse_; }
  const FiltrationCertificate& forward_certificate() const { return forward_; }
  const FiltrationCertificate& backward_certificate() const { return backward_; }

 private:
  ComposedMap map_;
  ComposedMap inverse_;
  FiltrationCertificate forward_;
  FiltrationCertificate backward_;
};

GreenEstimate green_plus(const ComposedMap& map, const Point2& z, double tol, int n_max);
GreenEstimate green_minus(const ComposedMap& map, const Point2& z, double tol, int n_max);

// Affine real-2-plane in C^2: (u, v) -> base + u e1 + v e2 with e1, e2
// linearly independent over R.
struct AffineSlice {
  Point2 base;
  Point2 e1;
  Point2 e2;

  Point2 at(double u, double v) const { return base + Complex(u) * e1 + Complex(v) * e2; }
  void validate() const;

  // The complex line through base in direction dir, parametrized by u + iv.
  static AffineSlice complex_line(const Point2& base, const Point2& dir);
  // The real plane R^2 inside C^2.
  static AffineSlice real_plane();
};

// Cell centers of an nx by ny grid over [u_min, u_max] x [v_min, v_max].
// Row 0 is the top (largest v).
struct ParamWindow {
  double u_min = -1.0, u_max = 1.0, v_min = -1.0, v_max = 1.0;
  int nx = 2, ny = 2;

  double du() const { return (u_max - u_min) / nx; }
  double dv() const { return (v_max - v_min) / ny; }
  double u(int col) const { return u_min + (col + 0.5) * du(); }
  double v(int row) const { return v_max - (row + 0.5) * dv(); }
  void validate() const;
};

struct RasterCell {
  double value = 0.0;
  double err_bound = 0.0;
  GreenStatus status = GreenStatus::BoundedUpToN;
  int n_used = 0;
  std::optional<double> mass;
};

struct RasterGrid {
  ParamWindow window;
  std::optional<AffineSlice> affine;
  std::string slice_label;
  GreenSide side = GreenSide::Plus;
  double tol = 0.0;
  int n_max = 0;
  std::vector<RasterCell> cells;

  const RasterCell& at(int row, int col) const { return cells[static_cast<std::size_t>(row) * window.nx + col]; }
  RasterCell& at(int row, int col) { return cells[static_cast<std::size_t>(row) * window.nx + col]; }
  double total_mass() const;
  std::size_t count(GreenStatus status) const;
};

using SliceFunction = std::function<Point2(double u, double v)>;

struct RasterOptions {
  double tol = 1e-10;
  int n_max = 200;
  GreenSide side = GreenSide::Plus;
  int threads = 1;
  Precision precision = Precision::Double;
};

RasterGrid raster_green(const ComposedMap& map, const AffineSlice& slice, const ParamWindow& window,
                        const RasterOptions& opts);

// Same over an arbitrary embedding (e.g. a manifold chart). Cells whose
// embedding throws Overflow are recorded with status Overflow.
RasterGrid raster_green(const GreenEvaluator& green, const SliceFunction& embed, const ParamWindow& window,
                        const RasterOptions& opts, std::string label);

// Per interior cell: (2 pi)^{-1} * five-point Laplacian * cell area. Masses
// are left signed. Boundary cells and cells next to unresolved values get no mass.
void attach_masses(RasterGrid& grid);

RasterGrid slice_measure_raster(const ComposedMap& map, const AffineSlice& slice, const ParamWindow& window,
                                const RasterOptions& opts);

}  // namespace henon
