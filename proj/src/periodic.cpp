#include "henon/periodic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "henon/extended.hpp"
#include "henon/green.hpp"
#include "henon/parallel.hpp"

namespace henon {

const char* to_string(OrbitClass cls) {
  switch (cls) {
    case OrbitClass::Saddle: return "Saddle";
    case OrbitClass::Sink: return "Sink";
    case OrbitClass::Source: return "Source";
    case OrbitClass::Indifferent: return "Indifferent";
  }
  return "Unknown";
}

namespace {

struct Evaluation {
  Point2 image;
  Mat2 jac;
  bool finite = false;
};

Evaluation eval_iterate(const ComposedMap& map, Point2 z, int n) {
  Evaluation e;
  Mat2 m = Mat2::identity();
  for (int i = 0; i < n; ++i) {
    m = derivative_raw(map, z) * m;
    z = apply_raw(map, z);
  }
  e.image = z;
  e.jac = m;
  e.finite = is_finite(z) && is_finite(m.a) && is_finite(m.b) && is_finite(m.c) && is_finite(m.d);
  return e;
}

double residual_norm(const ComposedMap& map, const Point2& z, int n) {
  Point2 w = z;
  for (int i = 0; i < n; ++i) w = apply_raw(map, w);
  const double r = dist_max(w, z);
  return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
}

}  // namespace

std::optional<Point2> newton_periodic(const ComposedMap& map, Point2 z, int n, int max_iter, double search_radius) {
  bool converged = false;
  int polish = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const Evaluation e = eval_iterate(map, z, n);
    if (!e.finite) return std::nullopt;
    const Point2 g = e.image - z;
    const double r = norm_max(g);
    const double scale = 1.0 + norm_max(z);
    if (r <= 4e-16 * scale * (1.0 + norm_max(e.image) / scale)) {
      converged = true;
      break;
    }
    Mat2 j = e.jac;
    j.a -= 1.0;
    j.d -= 1.0;
    Point2 step;
    try {
      step = solve(j, Complex(-1.0) * g);
    } catch (const Error&) {
      return std::nullopt;
    }
    const double step_norm = norm_max(step);
    if (!std::isfinite(step_norm)) return std::nullopt;
    // Backtracking on the residual; once the full step is tiny the iteration
    // is in the quadratic regime and is taken unconditionally.
    double alpha = 1.0;
    Point2 next = z + step;
    if (step_norm > 1e-6 * scale) {
      double best_r = std::numeric_limits<double>::infinity();
      Point2 best = next;
      for (int k = 0; k < 12; ++k, alpha *= 0.5) {
        const Point2 trial = z + Complex(alpha) * step;
        const double tr = residual_norm(map, trial, n);
        if (tr < best_r) {
          best_r = tr;
          best = trial;
        }
        if (tr < (1.0 - 0.25 * alpha) * r) break;
      }
      if (!std::isfinite(best_r)) return std::nullopt;
      next = best;
    }
    z = next;
    if (norm_max(z) > 8.0 * search_radius) return std::nullopt;
    if (step_norm <= 1e-14 * scale) {
      if (++polish >= 2) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) {
    // Accept when the residual is already at rounding level.
    const Evaluation e = eval_iterate(map, z, n);
    if (!e.finite) return std::nullopt;
    const double r = dist_max(e.image, z);
    if (!(r <= 1e-12 * (1.0 + norm_max(z)) * (1.0 + std::abs(e.jac.a) + std::abs(e.jac.d)))) return std::nullopt;
  }
  return z;
}

namespace {

// Classification works on the rebalanced product M = e^{log_scale} * mh.
// The determinant is accumulated step by step (unit phase times e^{log_abs_det})
// because det(mh) of a nearly rank-one product cancels badly.
template <class C>
struct ScaledProduct {
  BasicMat2<C> mh = BasicMat2<C>::identity();
  double log_scale = 0.0;
  C det_phase = C(1.0, 0.0);
  double log_abs_det = 0.0;
};

template <class C>
double max_entry(const BasicMat2<C>& m) {
  using std::abs;
  double out = 0.0;
  for (const C* e : {&m.a, &m.b, &m.c, &m.d}) out = std::max(out, static_cast<double>(abs(*e)));
  return out;
}

template <class C>
ScaledProduct<C> cycle_product(const ComposedMap& map, const std::vector<Point2>& pts) {
  ScaledProduct<C> p;
  for (const Point2& z : pts) {
    BasicPoint2<C> w{C(z.x.real(), z.x.imag()), C(z.y.real(), z.y.imag())};
    using std::abs;
    const BasicMat2<C> step = derivative_raw(map, w);
    const C sd = step.det();
    const double asd = static_cast<double>(abs(sd));
    if (asd > 0.0) {
      p.det_phase = p.det_phase * (sd / C(asd, 0.0));
      p.log_abs_det += std::log(asd);
    }
    p.mh = step * p.mh;
    const double s = max_entry(p.mh);
    if (s > 0.0 && std::isfinite(s)) {
      const C inv(1.0 / s, 0.0);
      p.mh = {p.mh.a * inv, p.mh.b * inv, p.mh.c * inv, p.mh.d * inv};
      p.log_scale += std::log(s);
    }
  }
  return p;
}

struct Multipliers {
  // Unit phases and log moduli of lambda_u and lambda_s.
  Complex phase_u, phase_s;
  double log_u = 0.0, log_s = 0.0;
  bool ok = false;
};

template <class C>
Multipliers multipliers_from(const ScaledProduct<C>& p) {
  using std::abs;
  using std::sqrt;
  using std::exp;
  Multipliers m;
  const C tr = p.mh.trace();
  // det(mh) = det(product) / e^{2 log_scale}
  const C det = p.det_phase * C(exp(p.log_abs_det - 2.0 * p.log_scale), 0.0);
  const C half = tr * C(0.5, 0.0);
  const C disc = sqrt(half * half - det);
  const C r1 = half + disc;
  const C r2 = half - disc;
  const C lu = abs(r1) >= abs(r2) ? r1 : r2;
  const double alu = static_cast<double>(abs(lu));
  if (!(alu > 0.0) || !std::isfinite(alu)) return m;
  const C pu = lu / C(alu, 0.0);
  const C ps = p.det_phase / pu;
  m.phase_u = {static_cast<double>(pu.real()), static_cast<double>(pu.imag())};
  m.phase_s = {static_cast<double>(ps.real()), static_cast<double>(ps.imag())};
  m.log_u = p.log_scale + std::log(alu);
  m.log_s = p.log_abs_det - m.log_u;
  m.ok = is_finite(m.phase_u) && is_finite(m.phase_s) && std::isfinite(m.log_u) && std::isfinite(m.log_s);
  return m;
}

}  // namespace

PeriodicOrbit classify_orbit(const ComposedMap& map, PeriodicOrbit orbit, double margin) {
  if (orbit.points.empty()) throw Error(ErrorKind::InvalidArgument, "empty orbit");
  Multipliers m = multipliers_from(cycle_product<Complex>(map, orbit.points));
  if (!m.ok) {
    // Product left the double range; redo in binary128.
    m = multipliers_from(cycle_product<ExtComplex>(map, orbit.points));
    if (!m.ok) throw Error(ErrorKind::IllConditioned, "derivative product along the cycle is not finite");
  }
  orbit.log_abs_u = m.log_u;
  orbit.log_abs_s = m.log_s;
  orbit.lambda_u = m.phase_u * std::exp(m.log_u);
  orbit.lambda_s = m.phase_s * std::exp(m.log_s);
  const double lo = std::log1p(-margin);
  const double hi = std::log1p(margin);
  if (orbit.log_abs_s < lo && orbit.log_abs_u > hi)
    orbit.cls = OrbitClass::Saddle;
  else if (orbit.log_abs_u < lo)
    orbit.cls = OrbitClass::Sink;
  else if (orbit.log_abs_s > hi)
    orbit.cls = OrbitClass::Source;
  else
    orbit.cls = OrbitClass::Indifferent;
  return orbit;
}

Realness realness_verdict(const ComposedMap& map, const PeriodicOrbit& orbit, double tol_im) {
  if (!map.is_real()) throw Error(ErrorKind::NotApplicable, "realness verdict needs a real map");
  Realness r;
  for (const Point2& z : orbit.points) r.max_im = std::max(r.max_im, max_imag(z));
  r.real = r.max_im < tol_im;
  return r;
}

namespace {

double radical_inverse(std::uint64_t index, unsigned base) {
  double inv = 1.0 / base;
  double f = inv;
  double out = 0.0;
  while (index > 0) {
    out += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return out;
}

std::vector<Point2> make_seeds(const PeriodicOptions& opts, double radius) {
  std::vector<Point2> seeds;
  auto lin = [radius](int m, int i) { return m == 1 ? 0.0 : -radius + 2.0 * radius * i / (m - 1); };
  // Complex grids of every density up to seed_density, so seed sets are nested.
  for (int m = 2; m <= opts.seed_density; ++m) {
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int c = 0; c < m; ++c)
          for (int d = 0; d < m; ++d) seeds.push_back({{lin(m, a), lin(m, b)}, {lin(m, c), lin(m, d)}});
  }
  for (int a = 0; a < opts.real_density; ++a)
    for (int b = 0; b < opts.real_density; ++b)
      seeds.push_back({{lin(opts.real_density, a), 0.0}, {lin(opts.real_density, b), 0.0}});
  // Halton points with a Cranley-Patterson shift drawn from the run seed.
  // Raw mt19937_64 output is used because it is fully specified by the standard.
  std::mt19937_64 gen(opts.seed);
  double shift[4];
  for (double& s : shift) s = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  const unsigned bases[4] = {2, 3, 5, 7};
  for (int i = 0; i < opts.quasi_random; ++i) {
    double u[4];
    for (int k = 0; k < 4; ++k) {
      double v = radical_inverse(static_cast<std::uint64_t>(i) + 1, bases[k]) + shift[k];
      u[k] = -radius + 2.0 * radius * (v - std::floor(v));
    }
    seeds.push_back({{u[0], u[1]}, {u[2], u[3]}});
  }
  return seeds;
}

bool lex_less(const Point2& a, const Point2& b) {
  return std::make_tuple(a.x.real(), a.x.imag(), a.y.real(), a.y.imag()) <
         std::make_tuple(b.x.real(), b.x.imag(), b.y.real(), b.y.imag());
}

// Smallest k | n with f^k(z) = z up to a loose tolerance.
int exact_period(const ComposedMap& map, const Point2& z, int n) {
  for (int k = 1; k < n; ++k) {
    if (n % k != 0) continue;
    if (residual_norm(map, z, k) <= 1e-8 * (1.0 + norm_max(z))) return k;
  }
  return n;
}

std::optional<PeriodicOrbit> build_orbit(const ComposedMap& map, const Point2& z0, int n, const PeriodicOptions& opts,
                                         double radius) {
  const int k = exact_period(map, z0, n);
  std::vector<Point2> pts{z0};
  for (int i = 1; i < k; ++i) {
    Point2 next = apply_raw(map, pts.back());
    if (auto refined = newton_periodic(map, next, k, opts.newton_max, radius)) next = *refined;
    pts.push_back(next);
  }
  const auto first = std::min_element(pts.begin(), pts.end(), lex_less);
  std::rotate(pts.begin(), first, pts.end());
  PeriodicOrbit orbit;
  orbit.points = std::move(pts);
  orbit.requested_n = n;
  for (int i = 0; i < k; ++i) {
    const Point2 img = apply_raw(map, orbit.points[i]);
    orbit.residual = std::max(orbit.residual, dist_max(img, orbit.points[(i + 1) % k]));
  }
  if (!(orbit.residual < opts.tol)) return std::nullopt;
  orbit.residual_extended = orbit_residual_extended(map, orbit.points);
  orbit = classify_orbit(map, std::move(orbit), opts.margin);
  if (map.is_real()) orbit.realness = realness_verdict(map, orbit, opts.tol_im);
  return orbit;
}

void sort_orbits(std::vector<PeriodicOrbit>& orbits) {
  std::sort(orbits.begin(), orbits.end(), [](const PeriodicOrbit& a, const PeriodicOrbit& b) {
    if (a.period() != b.period()) return a.period() < b.period();
    return lex_less(a.points.front(), b.points.front());
  });
}

// D(f^n) - I nearly singular relative to |D(f^n)|: the root is (close to)
// multiple and Newton leaves a cloud of equally good approximations.
bool near_multiple(const ComposedMap& map, const Point2& z, int n) {
  const Evaluation e = eval_iterate(map, z, n);
  if (!e.finite) return false;
  Mat2 j = e.jac;
  const double scale = 1.0 + max_entry(j);
  j.a -= 1.0;
  j.d -= 1.0;
  return smallest_singular_value(j) < 1e-4 * scale;
}

struct KnownPoint {
  Point2 z;
  bool multiple = false;
};

// Merges candidate points into `out`, skipping points already covered.
void merge_points(const ComposedMap& map, int n, const PeriodicOptions& opts, double radius,
                  const std::vector<std::optional<Point2>>& candidates, PeriodicSearch& out) {
  // Near-multiple roots are merged within a much wider radius.
  auto covered = [&](const std::vector<KnownPoint>& known, const Point2& z, bool multiple, double* nearest) {
    double best = std::numeric_limits<double>::infinity();
    bool hit = false;
    for (const KnownPoint& p : known) {
      const double dz = dist_max(p.z, z);
      best = std::min(best, dz);
      if (dz < opts.dedup_eps) hit = true;
      if (multiple && p.multiple && dz < 1e-4 * (1.0 + norm_max(z))) hit = true;
    }
    if (nearest) *nearest = best;
    return hit;
  };
  std::vector<KnownPoint> known;
  for (const auto& o : out.orbits)
    for (const Point2& z : o.points) known.push_back({z, near_multiple(map, z, n)});
  for (const auto& cand : candidates) {
    if (!cand) {
      ++out.stats.nonconverged;
      continue;
    }
    ++out.stats.converged;
    const bool multiple = near_multiple(map, *cand, n);
    if (covered(known, *cand, multiple, nullptr)) continue;
    auto orbit = build_orbit(map, *cand, n, opts, radius);
    if (!orbit) {
      ++out.stats.nonconverged;
      continue;
    }
    // The cycle may coincide with a known one if cand was a poorly resolved member.
    double orbit_nearest = std::numeric_limits<double>::infinity();
    bool dup = false;
    for (const Point2& q : orbit->points) {
      double d = 0.0;
      dup = dup || covered(known, q, multiple, &d);
      orbit_nearest = std::min(orbit_nearest, d);
    }
    if (dup) continue;
    if (orbit_nearest < 10.0 * opts.dedup_eps) {
      ++out.stats.near_collisions;
      out.warnings.push_back("two orbits closer than 10*dedup_eps at period " + std::to_string(orbit->period()));
    }
    for (const Point2& z : orbit->points) known.push_back({z, multiple});
    out.orbits.push_back(std::move(*orbit));
  }
}

}  // namespace

PeriodicSearch find_periodic_orbits(const ComposedMap& map, int n, const PeriodicOptions& opts) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "period must be >= 1");
  if (!(opts.tol > 0.0) || !(opts.dedup_eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerances must be positive");
  const double radius = filtration_radius(map).radius;
  const std::vector<Point2> seeds = make_seeds(opts, radius);
  std::vector<std::optional<Point2>> results(seeds.size());
  parallel_for(seeds.size(), opts.threads, [&](std::size_t i) {
    results[i] = newton_periodic(map, seeds[i], n, opts.newton_max, radius);
  });
  PeriodicSearch out;
  out.stats.seeds = seeds.size();
  merge_points(map, n, opts, radius, results, out);
  sort_orbits(out.orbits);
  return out;
}

PeriodicSearch find_periodic_orbits_escalating(const ComposedMap& map, int n, const PeriodicOptions& opts, int rounds) {
  PeriodicOptions cur = opts;
  PeriodicSearch best = find_periodic_orbits(map, n, cur);
  const double radius = filtration_radius(map).radius;
  for (int r = 1; r < rounds; ++r) {
    if (completeness_audit(map, n, best.orbits).missing <= 0) break;
    cur.seed_density += 2;
    cur.quasi_random *= 4;
    cur.real_density *= 2;
    cur.seed = opts.seed + static_cast<std::uint64_t>(r);
    const PeriodicSearch more = find_periodic_orbits(map, n, cur);
    std::vector<std::optional<Point2>> pts;
    for (const auto& o : more.orbits) pts.emplace_back(o.points.front());
    best.stats.seeds += more.stats.seeds;
    merge_points(map, n, cur, radius, pts, best);
    best.stats.nonconverged += more.stats.nonconverged;
    best.warnings.insert(best.warnings.end(), more.warnings.begin(), more.warnings.end());
    sort_orbits(best.orbits);
  }
  return best;
}

int shadowing_horizon(const PeriodicOrbit& orbit, bool forward, int cap) {
  const double k = orbit.period();
  const double rate = forward ? orbit.log_abs_u / k : -orbit.log_abs_s / k;
  if (!(rate > 0.0)) return cap;
  double scale = 0.0;
  for (const Point2& z : orbit.points) scale = std::max(scale, norm_max(z));
  const double err = std::max(orbit.residual, 2.2e-16 * (1.0 + scale));
  const double steps = std::log(1e-6 / err) / rate;
  return std::clamp(static_cast<int>(steps), 0, cap);
}

bool periodic_orbit_bounded(const ComposedMap& map, const PeriodicOrbit& orbit, int cap) {
  const GreenEvaluator green(map);
  const double radius = bounded_set_radius(map);
  const int hf = shadowing_horizon(orbit, true, cap);
  const int hb = shadowing_horizon(orbit, false, cap);
  for (const Point2& z : orbit.points) {
    if (!(norm_max(z) <= radius)) return false;
    if (green.forward_test(z, hf).status != GreenStatus::BoundedUpToN) return false;
    if (green.backward_test(z, hb).status != GreenStatus::BoundedUpToN) return false;
  }
  return true;
}

long long solution_count(const std::vector<PeriodicOrbit>& orbits, int n) {
  long long count = 0;
  for (const auto& o : orbits)
    if (n % o.period() == 0) count += o.period();
  return count;
}

long long real_solution_count(const std::vector<PeriodicOrbit>& orbits, int n) {
  long long count = 0;
  for (const auto& o : orbits)
    if (n % o.period() == 0 && o.realness && o.realness->real) count += o.period();
  return count;
}

CompletenessAudit completeness_audit(const ComposedMap& map, int n, const std::vector<PeriodicOrbit>& found) {
  CompletenessAudit audit;
  audit.expected = 1;
  for (int i = 0; i < n; ++i) audit.expected *= map.degree();
  audit.found_count = solution_count(found, n);
  audit.missing = std::max(0LL, audit.expected - audit.found_count);
  audit.consistent = audit.found_count <= audit.expected;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (n % found[i].period() != 0) continue;
    Mat2 m = derivative_iterate(map, found[i].points.front(), n);
    const double scale = std::max({1.0, std::abs(m.a), std::abs(m.b), std::abs(m.c), std::abs(m.d)});
    m.a -= 1.0;
    m.d -= 1.0;
    if (smallest_singular_value(m) < 1e-6 * scale) audit.multiplicity_flags.push_back(i);
  }
  return audit;
}

}  // namespace henon
