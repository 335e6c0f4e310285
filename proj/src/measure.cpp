#include "henon/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace henon {

const char* to_string(HomoclinicRealness h) {
  switch (h) {
    case HomoclinicRealness::NotScanned: return "NotScanned";
    case HomoclinicRealness::Unknown: return "Unknown";
    case HomoclinicRealness::RealInWindow: return "RealInWindow";
    case HomoclinicRealness::NonReal: return "NonReal";
  }
  return "Unknown";
}

const char* to_string(EntropyVerdict v) {
  switch (v) {
    case EntropyVerdict::ConsistentWithMaxEntropy: return "ConsistentWithMaxEntropy";
    case EntropyVerdict::BelowMaxEntropy: return "BelowMaxEntropy";
  }
  return "Unknown";
}

namespace {

std::vector<std::vector<PeriodicOrbit>> scan_periods(const ComposedMap& map, int n_max, const EnsembleOptions& opts) {
  if (n_max < 1) throw Error(ErrorKind::InvalidArgument, "N_max must be >= 1");
  std::vector<std::vector<PeriodicOrbit>> out(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    PeriodicSearch s = find_periodic_orbits_escalating(map, n, opts.periodic, opts.escalation_rounds);
    for (PeriodicOrbit& o : s.orbits)
      if (o.period() == n) out[n - 1].push_back(std::move(o));
  }
  return out;
}

SaddleEnsemble ensemble_from(const ComposedMap& map, int n_max, std::vector<std::vector<PeriodicOrbit>> by_period,
                             const EnsembleOptions& opts) {
  SaddleEnsemble e;
  e.n_max = n_max;
  for (const auto& row : by_period)
    for (const PeriodicOrbit& o : row) {
      if (o.cls != OrbitClass::Saddle) continue;
      if (!periodic_orbit_bounded(map, o, opts.bounded_horizon)) continue;
      e.orbits.push_back(o);
      e.point_count += o.points.size();
    }
  e.by_period = std::move(by_period);
  if (e.orbits.empty()) throw Error(ErrorKind::EmptyEnsemble, "no saddle orbits of period <= " + std::to_string(n_max));
  return e;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string point_text(const Point2& z) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "(%.12g%+.12gi, %.12g%+.12gi)", z.x.real(), z.x.imag(), z.y.real(), z.y.imag());
  return buf;
}

}  // namespace

std::optional<PeriodicOrbit> weakest_saddle(const std::vector<std::vector<PeriodicOrbit>>& by_period, bool real_only) {
  for (const auto& row : by_period) {
    const PeriodicOrbit* best = nullptr;
    for (const PeriodicOrbit& o : row) {
      if (o.cls != OrbitClass::Saddle) continue;
      if (real_only && !(o.realness && o.realness->real)) continue;
      if (!best || o.log_abs_u < best->log_abs_u) best = &o;
    }
    if (best) return *best;
  }
  return std::nullopt;
}

SaddleEnsemble build_ensemble(const ComposedMap& map, int n_max, const EnsembleOptions& opts) {
  return ensemble_from(map, n_max, scan_periods(map, n_max, opts), opts);
}

LyapunovEstimates lyapunov_estimates(const ComposedMap& map, const SaddleEnsemble& ensemble) {
  LyapunovEstimates out;
  out.log_degree = std::log(static_cast<double>(map.degree()));
  const double log_det = std::log(std::abs(map.jac_det()));
  double wu = 0.0, ws = 0.0, w = 0.0;
  for (const PeriodicOrbit& o : ensemble.orbits) {
    const double k = o.period();
    OrbitExponents e{o.period(), o.log_abs_u / k, o.log_abs_s / k};
    out.per_orbit.push_back(e);
    out.sum_identity_error = std::max(out.sum_identity_error, std::abs(e.chi_u + e.chi_s - log_det));
    wu += k * e.chi_u;
    ws += k * e.chi_s;
    w += k;
  }
  if (w > 0.0) {
    out.chi_u = wu / w;
    out.chi_s = ws / w;
  }
  return out;
}

DimensionEstimates dimension_estimates(const ComposedMap& map, const LyapunovEstimates& exponents) {
  DimensionEstimates d;
  d.hd_unstable_slice = exponents.log_degree / std::abs(exponents.chi_s);
  d.dissipative = std::abs(map.jac_det()) < 1.0;
  d.dissipative_check = d.dissipative && d.hd_unstable_slice < 1.0;
  return d;
}

MaxEntropyReport max_entropy_report(const ComposedMap& map, int n_max, const ReportOptions& opts) {
  if (!map.is_real()) throw Error(ErrorKind::NotRealMap, "entropy report needs real coefficients");
  MaxEntropyReport r;
  r.n_max = n_max;
  r.orbits_by_period = scan_periods(map, n_max, opts.ensemble);

  long long dn = 1;
  for (int n = 1; n <= n_max; ++n) {
    dn *= map.degree();
    std::vector<PeriodicOrbit> dividing;
    for (int k = 1; k <= n; ++k)
      if (n % k == 0) dividing.insert(dividing.end(), r.orbits_by_period[k - 1].begin(), r.orbits_by_period[k - 1].end());
    r.growth_table.push_back({n, solution_count(dividing, n), real_solution_count(dividing, n), dn});
  }

  for (const auto& row : r.orbits_by_period)
    for (const PeriodicOrbit& o : row) {
      const Realness re = o.realness ? *o.realness : realness_verdict(map, o, opts.ensemble.periodic.tol_im);
      if (!re.real) {
        r.all_periodic_real = false;
        if (!r.nonreal_witness) r.nonreal_witness = o;
      }
      if (o.cls == OrbitClass::Sink) r.sinks_found.push_back(o);
    }

  try {
    SaddleEnsemble e = ensemble_from(map, n_max, r.orbits_by_period, opts.ensemble);
    r.exponents = lyapunov_estimates(map, e);
    r.dimension = dimension_estimates(map, *r.exponents);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::EmptyEnsemble) throw;
  }

  if (opts.homoclinic_scan) {
    const std::optional<PeriodicOrbit> best = weakest_saddle(r.orbits_by_period, true);
    r.homoclinic = HomoclinicRealness::Unknown;
    if (best) {
      r.homoclinic_saddle = *best;
      const ManifoldChart u = linearize(map, *best, ChartSide::Unstable, 0, opts.chart);
      const ManifoldChart s = linearize(map, *best, ChartSide::Stable, 0, opts.chart);
      const IntersectionSearch hits = find_intersections(map, u, s, opts.intersections);
      r.homoclinic_stats = hits.stats;
      r.homoclinic_count = hits.points.size();
      for (const HomoclinicPoint& h : hits.points) {
        if (!h.real && h.bounded_forward && h.bounded_backward) {
          r.homoclinic = HomoclinicRealness::NonReal;
          r.homoclinic_witness = h;
          break;
        }
      }
      if (r.homoclinic != HomoclinicRealness::NonReal && !hits.points.empty()) r.homoclinic = HomoclinicRealness::RealInWindow;
    }
  }

  if (r.nonreal_witness)
    r.reasons.push_back("nonreal periodic orbit of period " + std::to_string(r.nonreal_witness->period()) +
                        " (max |Im| " + fmt("%.3g", r.nonreal_witness->realness->max_im) + ")");
  if (!r.sinks_found.empty())
    r.reasons.push_back("real map has a sink of period " + std::to_string(r.sinks_found.front().period()));
  if (r.homoclinic == HomoclinicRealness::NonReal)
    r.reasons.push_back("nonreal homoclinic intersection at a real saddle (max |Im| " +
                        fmt("%.3g", r.homoclinic_witness->max_im) + ")");
  r.verdict = r.reasons.empty() ? EntropyVerdict::ConsistentWithMaxEntropy : EntropyVerdict::BelowMaxEntropy;
  return r;
}

std::string render_text(const ComposedMap& map, const MaxEntropyReport& r) {
  std::ostringstream os;
  const double log_d = std::log(static_cast<double>(map.degree()));
  os << "maximal entropy report\n";
  os << "degree " << map.degree() << ", log d = " << fmt("%.6f", log_d) << ", jacobian " << fmt("%.6g", map.jac_det().real())
     << "\n";
  os << "periods scanned: 1.." << r.n_max << "\n\n";
  os << "  n   found  real  expected\n";
  for (const GrowthRow& g : r.growth_table) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%3d %7lld %5lld %9lld\n", g.n, g.complex_count, g.real_count, g.expected);
    os << buf;
  }
  os << "\nall periodic points real: " << (r.all_periodic_real ? "yes" : "no") << "\n";
  if (r.nonreal_witness) {
    os << "nonreal witness (period " << r.nonreal_witness->period() << ", residual "
       << fmt("%.3g", r.nonreal_witness->residual) << "):\n";
    for (const Point2& z : r.nonreal_witness->points) os << "  " << point_text(z) << "\n";
  }
  os << "sinks: " << r.sinks_found.size() << "\n";
  for (const PeriodicOrbit& s : r.sinks_found)
    os << "  period " << s.period() << " at " << point_text(s.points.front()) << ", |lambda_u| = "
       << fmt("%.6g", std::exp(s.log_abs_u)) << "\n";
  os << "homoclinic scan: " << to_string(r.homoclinic);
  if (r.homoclinic == HomoclinicRealness::RealInWindow) os << " (unknown beyond window)";
  if (r.homoclinic != HomoclinicRealness::NotScanned) os << ", " << r.homoclinic_count << " intersections";
  os << "\n";
  if (r.homoclinic_witness) os << "  witness " << point_text(r.homoclinic_witness->point) << "\n";
  if (r.exponents) {
    os << "\nsaddle ensemble estimates (uniform weights on saddle points, heuristic):\n";
    os << "  chi_u = " << fmt("%.6f", r.exponents->chi_u) << " (log d = " << fmt("%.6f", log_d)
       << "; the bound chi_u >= log d holds for the measure average, not per orbit)\n";
    os << "  chi_s = " << fmt("%.6f", r.exponents->chi_s) << "\n";
    os << "  exponent sum identity error = " << fmt("%.3g", r.exponents->sum_identity_error) << "\n";
    os << "  entropy of the equilibrium measure = log d = " << fmt("%.6f", log_d) << "\n";
  }
  if (r.dimension) {
    os << "  Young dimension log d/|chi_s| = " << fmt("%.6f", r.dimension->hd_unstable_slice);
    if (r.dimension->dissipative) os << (r.dimension->dissipative_check ? " (< 1)" : " (not < 1, flagged)");
    os << "\n";
  }
  os << "\nverdict: " << to_string(r.verdict) << "\n";
  if (r.verdict == EntropyVerdict::BelowMaxEntropy) {
    for (const std::string& s : r.reasons) os << "  reason: " << s << "\n";
    os << "  topological entropy of the real map is strictly less than log d = " << fmt("%.6f", log_d) << "\n";
  } else {
    os << "  up to period " << r.n_max << ", not a proof\n";
  }
  return os.str();
}

}  // namespace henon
