#include "henon/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "henon/parallel.hpp"

namespace henon {

const char* to_string(ChartSide side) { return side == ChartSide::Unstable ? "Unstable" : "Stable"; }

namespace {

// Truncated power series in t.
using Series = std::vector<Complex>;

Series mul(const Series& a, const Series& b) {
  Series out(a.size(), Complex(0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == Complex(0.0)) continue;
    for (std::size_t j = 0; i + j < out.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

struct PointSeries {
  Series x, y;
};

PointSeries apply_series(const ComposedMap& map, PointSeries z) {
  for (const auto& f : map.factors()) {
    const auto& cs = f.p_coeffs();
    Series acc(z.y.size(), Complex(0.0));
    acc[0] = cs.back();
    for (int j = f.degree() - 1; j >= 0; --j) {
      acc = mul(acc, z.y);
      acc[0] += cs[j];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= f.delta() * z.x[i];
    z.x = std::move(z.y);
    z.y = std::move(acc);
  }
  return z;
}

Point2 iterate_raw(const ComposedMap& map, Point2 z, int n) {
  for (int i = 0; i < n; ++i) z = apply_raw(map, z);
  return z;
}

Mat2 cycle_derivative(const ComposedMap& map, Point2 z, int k) {
  Mat2 m = Mat2::identity();
  for (int i = 0; i < k; ++i) {
    m = derivative_raw(map, z) * m;
    z = apply_raw(map, z);
  }
  return m;
}

Point2 eigenvector(const Mat2& m, Complex lambda) {
  const Point2 v1{m.b, lambda - m.a};
  const Point2 v2{lambda - m.d, m.c};
  auto n2 = [](const Point2& v) { return std::norm(v.x) + std::norm(v.y); };
  Point2 v = n2(v1) >= n2(v2) ? v1 : v2;
  const double len = std::sqrt(n2(v));
  if (len == 0.0) throw Error(ErrorKind::IllConditioned, "degenerate eigenvector");
  v = Complex(1.0 / len) * v;
  // Fix the phase so the dominant component is real and positive; real maps
  // with real multipliers then get real charts.
  const Complex dom = std::abs(v.x) >= std::abs(v.y) ? v.x : v.y;
  return (std::conj(dom) / std::abs(dom)) * v;
}

Point2 to_output(const ManifoldChart& chart, const Point2& z) { return chart.swapped ? swap_xy(z) : z; }

// F = dynamics^k
Point2 push(const ManifoldChart& chart, const Point2& z) { return iterate_raw(chart.dynamics, z, chart.period()); }

}  // namespace

Point2 series_eval(const ManifoldChart& chart, Complex t) {
  Point2 acc = chart.coeffs.back();
  for (int m = chart.order() - 1; m >= 0; --m) acc = t * acc + chart.coeffs[m];
  return acc;
}

Point2 series_derivative(const ManifoldChart& chart, Complex t) {
  const int K = chart.order();
  Point2 acc = Complex(static_cast<double>(K)) * chart.coeffs[K];
  for (int m = K - 1; m >= 1; --m) acc = t * acc + Complex(static_cast<double>(m)) * chart.coeffs[m];
  return acc;
}

double chart_residual(const ManifoldChart& chart, double radius, int samples) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Complex t = std::polar(radius, 2.0 * std::numbers::pi * (i + 0.5) / samples);
    const double r = dist_max(push(chart, series_eval(chart, t)), series_eval(chart, chart.lambda * t));
    worst = std::max(worst, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
  }
  return worst;
}

ManifoldChart linearize(const ComposedMap& map, const PeriodicOrbit& saddle, ChartSide side, int base_index,
                        const ChartOptions& opts) {
  if (saddle.cls != OrbitClass::Saddle) throw Error(ErrorKind::NotASaddle, "linearization needs a saddle orbit");
  if (base_index < 0 || base_index >= saddle.period()) throw Error(ErrorKind::InvalidArgument, "base index out of range");
  if (opts.order < 1) throw Error(ErrorKind::InvalidArgument, "chart order must be >= 1");

  ManifoldChart chart{.side = side,
                      .base = saddle,
                      .base_index = base_index,
                      .dynamics = side == ChartSide::Unstable ? map : map.swapped_inverse(),
                      .swapped = side == ChartSide::Stable,
                      .lambda = {},
                      .other_eigenvalue = {},
                      .coeffs = {},
                      .r0 = 0.0,
                      .tol_chart = 0.0};
  const int k = saddle.period();
  const Point2 p = chart.swapped ? swap_xy(saddle.points[base_index]) : saddle.points[base_index];
  const Mat2 df = cycle_derivative(chart.dynamics, p, k);

  const Complex half = 0.5 * df.trace();
  const Complex disc = std::sqrt(half * half - df.det());
  Complex big = half + disc, small = half - disc;
  if (std::abs(small) > std::abs(big)) std::swap(big, small);
  small = df.det() / big;
  chart.lambda = big;
  chart.other_eigenvalue = small;
  if (!(std::abs(big) > 1.0 + opts.margin) || !(std::abs(small) < 1.0 - opts.margin))
    throw Error(ErrorKind::NotASaddle, "multipliers do not straddle the unit circle");

  const int K = opts.order;
  chart.coeffs.assign(K + 1, Point2{});
  chart.coeffs[0] = p;
  chart.coeffs[1] = eigenvector(df, big);

  // Order by order: the t^m coefficient of F(psi) is DF c_m + N_m, where N_m
  // only involves lower coefficients; F(psi(t)) = psi(lambda t) then gives
  // (DF - lambda^m) c_m = -N_m.
  Complex lam_m = big;
  for (int m = 2; m <= K; ++m) {
    lam_m *= big;
    for (const Complex mu : {big, small}) {
      if (std::abs(lam_m - mu) < 1e-10)
        throw Error(ErrorKind::NearResonance, "lambda^" + std::to_string(m) + " is within 1e-10 of an eigenvalue");
    }
    PointSeries ps{Series(m + 1, Complex(0.0)), Series(m + 1, Complex(0.0))};
    for (int i = 0; i < m; ++i) {
      ps.x[i] = chart.coeffs[i].x;
      ps.y[i] = chart.coeffs[i].y;
    }
    for (int i = 0; i < k; ++i) ps = apply_series(chart.dynamics, std::move(ps));
    Mat2 sys = df;
    sys.a -= lam_m;
    sys.d -= lam_m;
    chart.coeffs[m] = solve(sys, Point2{-ps.x[m], -ps.y[m]});
  }

  // Radius: the coefficient decay fit (margin 2) and the truncation tail at
  // |lambda| r0 bound r0 from above; then shrink until the measured
  // functional-equation residual meets the target.
  std::vector<std::pair<double, double>> pts;
  for (int m = std::max(2, K / 2); m <= K; ++m) {
    const double a = norm_max(chart.coeffs[m]);
    if (a > 0.0) pts.emplace_back(m, std::log(a));
  }
  const double abs_lam = std::abs(big);
  double r0 = 1.0;
  if (pts.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double nn = static_cast<double>(pts.size());
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    const double decay_radius = std::exp(-slope);
    double tail_radius = std::numeric_limits<double>::infinity();
    for (int m = std::max(2, K - 3); m <= K; ++m) {
      const double a = norm_max(chart.coeffs[m]);
      if (a > 0.0) tail_radius = std::min(tail_radius, std::pow(opts.target_residual * 1e-2 / a, 1.0 / m));
    }
    r0 = std::min(decay_radius / 2.0, tail_radius) / abs_lam;
  } else {
    r0 = 1.0 / abs_lam;
  }
  if (!(r0 > 0.0) || !std::isfinite(r0)) r0 = 1.0 / abs_lam;
  double res = chart_residual(chart, r0);
  for (int i = 0; i < 200 && !(res < opts.target_residual); ++i) {
    r0 *= 0.8;
    res = chart_residual(chart, r0);
  }
  if (!(res < opts.target_residual)) throw Error(ErrorKind::IllConditioned, "chart residual target not reachable");
  // Residual is holomorphic in t, so the boundary circle bounds the disk;
  // a second denser sweep guards against sampling gaps.
  res = std::max(res, chart_residual(chart, r0, 257));
  chart.r0 = r0;
  chart.tol_chart = std::max(2.0 * res, 1e-16 * (1.0 + norm_max(p)));
  return chart;
}

int chart_push_count(const ManifoldChart& chart, Complex t) {
  const double at = std::abs(t);
  if (at <= chart.r0) return 0;
  const double lam = std::abs(chart.lambda);
  int m = static_cast<int>(std::ceil(std::log(at / chart.r0) / std::log(lam)));
  while (at / std::pow(lam, m) > chart.r0) ++m;
  return std::max(m, 0);
}

Point2 chart_eval_forced(const ManifoldChart& chart, Complex t, int m) {
  if (m < 0) throw Error(ErrorKind::InvalidArgument, "push count must be >= 0");
  Point2 z = series_eval(chart, t / std::pow(chart.lambda, m));
  for (int i = 0; i < m; ++i) {
    z = push(chart, z);
    if (!is_finite(z)) throw Error(ErrorKind::Overflow, "chart evaluation left the floating-point range");
  }
  return to_output(chart, z);
}

Point2 chart_eval(const ManifoldChart& chart, Complex t) { return chart_eval_forced(chart, t, chart_push_count(chart, t)); }

std::pair<Point2, Point2> chart_eval_with_derivative(const ManifoldChart& chart, Complex t) {
  const int m = chart_push_count(chart, t);
  const Complex scale = std::pow(chart.lambda, -m);
  Point2 z = series_eval(chart, t * scale);
  Point2 v = scale * series_derivative(chart, t * scale);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < chart.period(); ++j) {
      v = derivative_raw(chart.dynamics, z) * v;
      z = apply_raw(chart.dynamics, z);
    }
    if (!is_finite(z) || !is_finite(v)) throw Error(ErrorKind::Overflow, "chart evaluation left the floating-point range");
  }
  return {to_output(chart, z), to_output(chart, v)};
}

RasterGrid green_on_chart(const ComposedMap& map, const ManifoldChart& chart, double half_width, int resolution,
                          const RasterOptions& opts) {
  const GreenEvaluator green(map);
  RasterOptions o = opts;
  o.side = chart.side == ChartSide::Unstable ? GreenSide::Plus : GreenSide::Minus;
  ParamWindow window{-half_width, half_width, -half_width, half_width, resolution, resolution};
  RasterGrid grid = raster_green(
      green, [&chart](double u, double v) { return chart_eval(chart, Complex(u, v)); }, window, o,
      std::string("chart:") + to_string(chart.side));
  attach_masses(grid);
  return grid;
}

std::optional<HomoclinicPoint> refine_intersection(const ManifoldChart& unstable, const ManifoldChart& stable,
                                                   Complex s, Complex t, const IntersectionOptions& opts) {
  const double s_limit = 4.0 * opts.s_inner * unstable.r0 * std::pow(std::abs(unstable.lambda), opts.s_fundamental_domains);
  const double t_limit = 4.0 * opts.t_inner * stable.r0 * std::pow(std::abs(stable.lambda), opts.t_fundamental_domains);
  auto evaluate = [&](Complex ss, Complex tt, Point2& g, Mat2& j) {
    const auto [pu, du] = chart_eval_with_derivative(unstable, ss);
    const auto [qs, ds] = chart_eval_with_derivative(stable, tt);
    g = pu - qs;
    j = {du.x, -ds.x, du.y, -ds.y};
    return pu;
  };
  try {
    Point2 g;
    Mat2 j;
    Point2 point = evaluate(s, t, g, j);
    bool converged = false;
    int polish = 0;
    for (int iter = 0; iter < opts.newton_max; ++iter) {
      const double r = norm_max(g);
      const Point2 step = solve(j, Complex(-1.0) * g);
      double alpha = 1.0;
      Complex s_next = s, t_next = t;
      Point2 g_next = g, p_next = point;
      Mat2 j_next = j;
      bool accepted = false;
      for (int k = 0; k < 10; ++k, alpha *= 0.5) {
        s_next = s + alpha * step.x;
        t_next = t + alpha * step.y;
        if (std::abs(s_next) > s_limit || std::abs(t_next) > t_limit) continue;
        try {
          p_next = evaluate(s_next, t_next, g_next, j_next);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::Overflow) throw;
          continue;
        }
        if (norm_max(g_next) < (1.0 - 0.25 * alpha) * r || norm_max(g_next) < opts.tol * 1e-3) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        converged = r < opts.tol * (1.0 + norm_max(point));
        break;
      }
      s = s_next;
      t = t_next;
      g = g_next;
      j = j_next;
      point = p_next;
      const double step_norm = alpha * std::max(std::abs(step.x), std::abs(step.y));
      if (norm_max(g) < opts.tol * (1.0 + norm_max(point)) &&
          step_norm < 1e-12 * (1.0 + std::max(std::abs(s), std::abs(t)))) {
        if (++polish >= 1) {
          converged = true;
          break;
        }
      }
    }
    if (!converged) {
      if (!(norm_max(g) < opts.tol * (1.0 + norm_max(point)))) return std::nullopt;
    }
    HomoclinicPoint hit;
    hit.s = s;
    hit.t = t;
    hit.point = point;
    hit.residual = norm_max(g);
    // Column-normalized so the verdict does not depend on chart scaling.
    const double nu = std::hypot(std::abs(j.a), std::abs(j.c));
    const double ns = std::hypot(std::abs(j.b), std::abs(j.d));
    const Mat2 jn{j.a / nu, j.b / ns, j.c / nu, j.d / ns};
    hit.min_singular = smallest_singular_value(jn);
    hit.transversal = hit.min_singular > opts.transversality_threshold;
    hit.max_im = max_imag(point);
    hit.real = hit.max_im < opts.tol_im;
    return hit;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Overflow || e.kind() == ErrorKind::IllConditioned) return std::nullopt;
    throw;
  }
}

std::pair<bool, bool> chart_orbit_bounded(const ComposedMap& map, const ManifoldChart& unstable,
                                          const ManifoldChart& stable, const HomoclinicPoint& hit, int horizon) {
  const double radius = bounded_set_radius(map);
  const int k_s = stable.period();
  const int k_u = unstable.period();
  auto consistent = [](const Point2& a, const Point2& b) { return dist_max(a, b) <= 1e-6 * (1.0 + norm_max(b)); };

  // Forward: f^{jk}(q) = psi_s(t / lambda_s^j); intermediate points by direct steps.
  bool forward = true;
  {
    Point2 anchor = hit.point;
    int steps = 0;
    for (int j = 0; steps < horizon && forward; ++j) {
      Point2 z = anchor;
      for (int i = 0; i < k_s && steps < horizon; ++i, ++steps) {
        if (!(norm_max(z) <= radius)) forward = false;
        z = apply_raw(map, z);
      }
      if (steps >= horizon) {
        forward = forward && norm_max(z) <= radius;
        break;
      }
      const Point2 next_anchor = chart_eval(stable, hit.t / std::pow(stable.lambda, j + 1));
      if (!consistent(z, next_anchor)) forward = false;
      anchor = next_anchor;
    }
  }
  bool backward = true;
  {
    Point2 anchor = hit.point;
    int steps = 0;
    for (int j = 0; steps < horizon && backward; ++j) {
      Point2 z = anchor;
      for (int i = 0; i < k_u && steps < horizon; ++i, ++steps) {
        if (!(norm_max(z) <= radius)) backward = false;
        z = apply_inverse_raw(map, z);
      }
      if (steps >= horizon) {
        backward = backward && norm_max(z) <= radius;
        break;
      }
      const Point2 next_anchor = chart_eval(unstable, hit.s / std::pow(unstable.lambda, j + 1));
      if (!consistent(z, next_anchor)) backward = false;
      anchor = next_anchor;
    }
  }
  return {forward, backward};
}

IntersectionSearch find_intersections(const ComposedMap& map, const ManifoldChart& unstable,
                                      const ManifoldChart& stable, const IntersectionOptions& opts) {
  if (unstable.side != ChartSide::Unstable || stable.side != ChartSide::Stable)
    throw Error(ErrorKind::InvalidArgument, "find_intersections needs an unstable and a stable chart");
  IntersectionSearch out;
  const double s_lo = opts.s_inner * unstable.r0;
  const double s_hi = s_lo * std::pow(std::abs(unstable.lambda), opts.s_fundamental_domains);
  const double t_lo = opts.t_inner * stable.r0;
  const double t_hi = t_lo * std::pow(std::abs(stable.lambda), opts.t_fundamental_domains);
  out.stats.s_max = s_hi;
  out.stats.t_max = t_hi;

  auto log_polar = [&](double lo, double hi) {
    std::vector<Complex> v;
    for (int i = 0; i < opts.radial_samples; ++i) {
      const double frac = opts.radial_samples == 1 ? 0.5 : static_cast<double>(i) / (opts.radial_samples - 1);
      const double r = lo * std::pow(hi / lo, frac);
      for (int a = 0; a < opts.angular_samples; ++a)
        v.push_back(std::polar(r, 2.0 * std::numbers::pi * (a + 0.25) / opts.angular_samples));
    }
    return v;
  };
  const auto s_seeds = log_polar(s_lo, s_hi);
  const auto t_seeds = log_polar(t_lo, t_hi);
  const std::size_t total = s_seeds.size() * t_seeds.size();
  out.stats.seeds = total;

  std::vector<std::optional<HomoclinicPoint>> results(total);
  parallel_for(total, opts.threads, [&](std::size_t i) {
    results[i] = refine_intersection(unstable, stable, s_seeds[i / t_seeds.size()], t_seeds[i % t_seeds.size()], opts);
  });

  const bool same_base = dist_max(unstable.base_point(), stable.base_point()) < 1e-12;
  for (auto& r : results) {
    if (!r) continue;
    ++out.stats.converged;
    if (same_base && std::abs(r->s) < 1e-3 * unstable.r0 && std::abs(r->t) < 1e-3 * stable.r0) {
      ++out.stats.trivial;
      continue;
    }
    // Keep hits inside the searched window only.
    if (std::abs(r->s) > s_hi * 1.0000001 || std::abs(r->t) > t_hi * 1.0000001) continue;
    bool dup = false;
    for (const auto& h : out.points)
      if (dist_max(h.point, r->point) < opts.dedup_eps) dup = true;
    if (dup) {
      ++out.stats.duplicates;
      continue;
    }
    const auto [fwd, bwd] = chart_orbit_bounded(map, unstable, stable, *r, opts.bounded_horizon);
    r->bounded_forward = fwd;
    r->bounded_backward = bwd;
    if (!fwd || !bwd) ++out.stats.rejected_unbounded;
    out.points.push_back(*r);
  }
  std::sort(out.points.begin(), out.points.end(), [](const HomoclinicPoint& a, const HomoclinicPoint& b) {
    return std::make_tuple(std::abs(a.s), a.s.real(), a.s.imag()) < std::make_tuple(std::abs(b.s), b.s.real(), b.s.imag());
  });
  return out;
}

}  // namespace henon
