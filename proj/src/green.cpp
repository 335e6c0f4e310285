#include "henon/green.hpp"

#include <cmath>
#include <numbers>

#include "henon/parallel.hpp"

namespace henon {

const char* to_string(GreenStatus status) {
  switch (status) {
    case GreenStatus::Escaped: return "Escaped";
    case GreenStatus::BoundedUpToN: return "BoundedUpToN";
    case GreenStatus::Unresolved: return "Unresolved";
    case GreenStatus::Overflow: return "Overflow";
  }
  return "Unknown";
}

double filtration_ratio(const ElementaryFactor& factor, double radius) {
  const int d = factor.degree();
  const auto& c = factor.p_coeffs();
  double sum = std::abs(factor.delta()) * std::pow(radius, 1 - d);
  for (int j = 0; j < d; ++j) sum += std::abs(c[j]) * std::pow(radius, j - d);
  return sum / std::abs(factor.leading());
}

namespace {

bool factor_filtration_holds(const ElementaryFactor& f, double radius) {
  const double rho = filtration_ratio(f, radius);
  const double growth = std::abs(f.leading()) * std::pow(radius, f.degree() - 1) * (1.0 - rho);
  return rho < 0.5 && growth >= 2.0;
}

}  // namespace

bool filtration_holds(const ComposedMap& map, double radius) {
  for (const auto& f : map.factors())
    if (!factor_filtration_holds(f, radius)) return false;
  return true;
}

FiltrationCertificate make_certificate(const ComposedMap& map, double radius) {
  if (!(radius > 0.0) || !filtration_holds(map, radius))
    throw Error(ErrorKind::InvalidArgument, "filtration does not hold at the requested radius");
  FiltrationCertificate cert;
  cert.radius = radius;
  cert.degree = map.degree();
  // Aggregate per-factor increments into one full step: a factor's error is
  // multiplied by the degrees of every later factor.
  const auto& fs = map.factors();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    double later = 1.0;
    for (std::size_t j = i + 1; j < fs.size(); ++j) later *= fs[j].degree();
    const double rho = filtration_ratio(fs[i], radius);
    cert.factor_ratios.push_back(rho);
    cert.growth_ratio = std::max(cert.growth_ratio, rho);
    const double log_lead = std::log(std::abs(fs[i].leading()));
    cert.error_constant += later * (std::abs(log_lead) + std::abs(std::log1p(-rho)) + std::abs(std::log1p(rho)));
    cert.leading_log_sum += later * log_lead;
  }
  return cert;
}

FiltrationCertificate filtration_radius(const ComposedMap& map) {
  double radius = 1.0;
  // deg p >= 2 guarantees termination; the bound is only a guard against
  // absurd coefficients.
  for (int k = 0; k < 1024; ++k, radius *= 2.0)
    if (filtration_holds(map, radius)) return make_certificate(map, radius);
  throw Error(ErrorKind::Internal, "filtration radius search did not terminate");
}

double bounded_set_radius(const ComposedMap& map) {
  return std::max(filtration_radius(map).radius, filtration_radius(map.swapped_inverse()).radius);
}

namespace {

template <class C>
auto abs_of(const C& c) {
  using std::abs;
  return abs(c);
}

template <class C>
bool finite_point(const BasicPoint2<C>& z) {
  using std::isfinite;
  using boost::multiprecision::isfinite;
  return isfinite(z.x.real()) && isfinite(z.x.imag()) && isfinite(z.y.real()) && isfinite(z.y.imag());
}

// Forward escape test shared by Green evaluation and the orbit test.
template <class C>
OrbitTest scan_orbit(const ComposedMap& map, BasicPoint2<C>& z, int n_max, const FiltrationCertificate& cert) {
  OrbitTest out;
  const double radius = cert.radius;
  bool inside = true;
  for (int n = 0; n <= n_max; ++n) {
    if (!finite_point(z)) {
      out.status = GreenStatus::Overflow;
      out.escape_step = n;
      return out;
    }
    const auto ax = abs_of(z.x);
    const auto ay = abs_of(z.y);
    if (ay >= radius && ay >= ax) {
      out.status = GreenStatus::Escaped;
      out.escape_step = n;
      return out;
    }
    const bool in_disk = ax <= radius && ay <= radius;
    if (in_disk && !inside) out.bidisk_from = n;
    inside = in_disk;
    if (n < n_max) z = apply_raw(map, z);
  }
  out.status = inside ? GreenStatus::BoundedUpToN : GreenStatus::Unresolved;
  return out;
}

// Continues an orbit already inside V+ in log-scaled form: the point is
// e^L (xh, yh) with |yh| = 1, so arbitrarily many steps never overflow.
template <class C>
GreenEstimate escape_tail(const ComposedMap& map, const FiltrationCertificate& cert, BasicPoint2<C> z, int escape_step,
                          double tol, int n_max) {
  using std::exp;
  using std::log;
  using std::pow;
  using R = decltype(abs_of(z.x));

  const double d = cert.degree;
  const double bound_unit = cert.error_constant / (d - 1.0);
  int target = escape_step;
  while (bound_unit * std::pow(d, -target) > tol) ++target;

  R ay = abs_of(z.y);
  R L = log(ay);
  C yh = z.y / C(ay);
  C xh = z.x / C(ay);
  for (int n = escape_step; n < target; ++n) {
    for (const auto& f : map.factors()) {
      const int deg = f.degree();
      const auto& cs = f.p_coeffs();
      // acc = sum_j c_j yh^j e^{(j-d)L} - delta xh e^{(1-d)L}, i.e. the new y over e^{dL}
      C acc = ElementaryFactor::lift<C>(cs.back());
      for (int j = deg - 1; j >= 0; --j) acc = acc * yh + ElementaryFactor::lift<C>(cs[j]) * C(exp(R(j - deg) * L));
      acc -= ElementaryFactor::lift<C>(f.delta()) * xh * C(exp(R(1 - deg) * L));
      const R mag = abs_of(acc);
      const R L_new = R(deg) * L + log(mag);
      xh = yh * C(exp(L - L_new));
      yh = acc / C(mag);
      L = L_new;
    }
  }
  GreenEstimate est;
  est.status = GreenStatus::Escaped;
  est.n_used = target;
  est.n_max = n_max;
  const R value = (L + R(cert.leading_log_sum / (d - 1.0))) / pow(R(d), target);
  est.value = std::max(0.0, static_cast<double>(value));
  est.err_bound = bound_unit * std::pow(d, -target);
  return est;
}

template <class C>
GreenEstimate green_forward(const ComposedMap& map, const FiltrationCertificate& cert, BasicPoint2<C> z, double tol,
                            int n_max) {
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  const OrbitTest scan = scan_orbit(map, z, n_max, cert);
  if (scan.status == GreenStatus::Escaped) return escape_tail(map, cert, z, scan.escape_step, tol, n_max);
  GreenEstimate est;
  est.status = scan.status;
  est.n_used = scan.status == GreenStatus::Overflow ? scan.escape_step : n_max;
  est.n_max = n_max;
  est.value = 0.0;
  est.err_bound = std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace

OrbitTest bounded_orbit_test(const ComposedMap& map, const Point2& z, int n_max, const FiltrationCertificate& cert) {
  Point2 w = z;
  return scan_orbit(map, w, n_max, cert);
}

GreenEvaluator::GreenEvaluator(const ComposedMap& map)
    : map_(map),
      inverse_(map.swapped_inverse()),
      forward_(filtration_radius(map_)),
      backward_(filtration_radius(inverse_)) {}

GreenEstimate GreenEvaluator::plus(const Point2& z, double tol, int n_max) const {
  return green_forward(map_, forward_, z, tol, n_max);
}

GreenEstimate GreenEvaluator::minus(const Point2& z, double tol, int n_max) const {
  return green_forward(inverse_, backward_, swap_xy(z), tol, n_max);
}

GreenEstimate GreenEvaluator::plus_extended(const Point2& z, double tol, int n_max) const {
  return green_forward(map_, forward_, to_ext(z), tol, n_max);
}

GreenEstimate GreenEvaluator::minus_extended(const Point2& z, double tol, int n_max) const {
  return green_forward(inverse_, backward_, to_ext(swap_xy(z)), tol, n_max);
}

OrbitTest GreenEvaluator::forward_test(const Point2& z, int n_max) const {
  return bounded_orbit_test(map_, z, n_max, forward_);
}

OrbitTest GreenEvaluator::backward_test(const Point2& z, int n_max) const {
  return bounded_orbit_test(inverse_, swap_xy(z), n_max, backward_);
}

GreenEstimate green_plus(const ComposedMap& map, const Point2& z, double tol, int n_max) {
  return green_forward(map, filtration_radius(map), z, tol, n_max);
}

GreenEstimate green_minus(const ComposedMap& map, const Point2& z, double tol, int n_max) {
  const ComposedMap inv = map.swapped_inverse();
  return green_forward(inv, filtration_radius(inv), swap_xy(z), tol, n_max);
}

void AffineSlice::validate() const {
  // Gram determinant of e1, e2 viewed as vectors in R^4.
  if (!is_finite(base) || !is_finite(e1) || !is_finite(e2)) throw Error(ErrorKind::InvalidArgument, "non-finite slice");
  auto dot = [](const Point2& a, const Point2& b) { return (std::conj(a.x) * b.x + std::conj(a.y) * b.y).real(); };
  // Rescaled first so very long direction vectors do not overflow.
  const double n1 = norm_max(e1), n2 = norm_max(e2);
  if (!(n1 > 0.0 && n2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "slice directions are not linearly independent over R");
  const Point2 f1 = Complex(1.0 / n1) * e1, f2 = Complex(1.0 / n2) * e2;
  const double g11 = dot(f1, f1), g22 = dot(f2, f2), g12 = dot(f1, f2);
  const double gram = g11 * g22 - g12 * g12;
  if (!(gram > 1e-24 * std::max(1.0, g11 * g22)))
    throw Error(ErrorKind::InvalidArgument, "slice directions are not linearly independent over R");
}

AffineSlice AffineSlice::complex_line(const Point2& base, const Point2& dir) {
  return {base, dir, Complex(0.0, 1.0) * dir};
}

AffineSlice AffineSlice::real_plane() { return {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}; }

void ParamWindow::validate() const {
  if (nx < 2 || ny < 2) throw Error(ErrorKind::InvalidArgument, "raster resolution must be at least 2x2");
  if (!(u_max > u_min) || !(v_max > v_min)) throw Error(ErrorKind::InvalidArgument, "empty parameter window");
}

double RasterGrid::total_mass() const {
  double sum = 0.0;
  for (const auto& c : cells)
    if (c.mass) sum += *c.mass;
  return sum;
}

std::size_t RasterGrid::count(GreenStatus status) const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.status == status ? 1 : 0;
  return n;
}

RasterGrid raster_green(const GreenEvaluator& green, const SliceFunction& embed, const ParamWindow& window,
                        const RasterOptions& opts, std::string label) {
  window.validate();
  RasterGrid grid;
  grid.window = window;
  grid.slice_label = std::move(label);
  grid.side = opts.side;
  grid.tol = opts.tol;
  grid.n_max = opts.n_max;
  grid.cells.resize(static_cast<std::size_t>(window.nx) * window.ny);
  parallel_for(grid.cells.size(), opts.threads, [&](std::size_t i) {
    const int row = static_cast<int>(i) / window.nx;
    const int col = static_cast<int>(i) % window.nx;
    RasterCell cell;
    Point2 z;
    try {
      z = embed(window.u(col), window.v(row));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Overflow) throw;
      cell.status = GreenStatus::Overflow;
      cell.err_bound = std::numeric_limits<double>::infinity();
      grid.cells[i] = cell;
      return;
    }
    GreenEstimate est;
    if (opts.precision == Precision::Extended)
      est = opts.side == GreenSide::Plus ? green.plus_extended(z, opts.tol, opts.n_max)
                                         : green.minus_extended(z, opts.tol, opts.n_max);
    else
      est = green.eval(opts.side, z, opts.tol, opts.n_max);
    cell.value = est.value;
    cell.err_bound = est.err_bound;
    cell.status = est.status;
    cell.n_used = est.n_used;
    grid.cells[i] = cell;
  });
  return grid;
}

RasterGrid raster_green(const ComposedMap& map, const AffineSlice& slice, const ParamWindow& window,
                        const RasterOptions& opts) {
  slice.validate();
  const GreenEvaluator green(map);
  RasterGrid grid = raster_green(
      green, [&slice](double u, double v) { return slice.at(u, v); }, window, opts, "affine");
  grid.affine = slice;
  return grid;
}

void attach_masses(RasterGrid& grid) {
  const auto& w = grid.window;
  const double hu = w.du();
  const double hv = w.dv();
  auto usable = [](const RasterCell& c) {
    return c.status == GreenStatus::Escaped || c.status == GreenStatus::BoundedUpToN;
  };
  for (auto& c : grid.cells) c.mass.reset();
  for (int row = 1; row + 1 < w.ny; ++row) {
    for (int col = 1; col + 1 < w.nx; ++col) {
      const RasterCell& c = grid.at(row, col);
      const RasterCell& l = grid.at(row, col - 1);
      const RasterCell& r = grid.at(row, col + 1);
      const RasterCell& up = grid.at(row - 1, col);
      const RasterCell& dn = grid.at(row + 1, col);
      if (!usable(c) || !usable(l) || !usable(r) || !usable(up) || !usable(dn)) continue;
      const double lap = (l.value + r.value - 2.0 * c.value) / (hu * hu) + (up.value + dn.value - 2.0 * c.value) / (hv * hv);
      grid.at(row, col).mass = lap * hu * hv / (2.0 * std::numbers::pi);
    }
  }
}

RasterGrid slice_measure_raster(const ComposedMap& map, const AffineSlice& slice, const ParamWindow& window,
                                const RasterOptions& opts) {
  RasterGrid grid = raster_green(map, slice, window, opts);
  attach_masses(grid);
  return grid;
}

}  // namespace henon
