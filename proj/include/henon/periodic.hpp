#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "henon/map_core.hpp"

namespace henon {

enum class OrbitClass { Saddle, Sink, Source, Indifferent };

const char* to_string(OrbitClass cls);

struct Realness {
  bool real = true;
  double max_im = 0.0;
};

struct PeriodicOrbit {
  // Consecutive orbit points; the size is the exact period k.
  std::vector<Point2> points;
  int requested_n = 1;
  // max_i |f(points[i]) - points[i+1 mod k]|
  double residual = 0.0;
  // Same quantity recomputed in 113-bit arithmetic.
  double residual_extended = 0.0;
  // Eigenvalues of D(f^k) along the cycle with |lambda_s| <= |lambda_u|.
  Complex lambda_s{};
  Complex lambda_u{};
  // log|lambda| kept separately so long periods never overflow.
  double log_abs_s = 0.0;
  double log_abs_u = 0.0;
  OrbitClass cls = OrbitClass::Indifferent;
  std::optional<Realness> realness;

  int period() const { return static_cast<int>(points.size()); }
};

struct PeriodicOptions {
  // Complex grid points per real axis; every grid of density <= this is seeded.
  int seed_density = 4;
  // Halton seeds in the search bidisk (prefix of one fixed sequence).
  int quasi_random = 256;
  // Real-plane grid points per axis (0 disables).
  int real_density = 24;
  double tol = 1e-10;
  int newton_max = 60;
  double dedup_eps = 1e-7;
  double margin = 1e-3;
  double tol_im = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SearchStats {
  std::size_t seeds = 0;
  std::size_t converged = 0;
  std::size_t nonconverged = 0;
  std::size_t near_collisions = 0;
};

struct PeriodicSearch {
  std::vector<PeriodicOrbit> orbits;
  SearchStats stats;
  std::vector<std::string> warnings;
};

// All solutions of f^n(z) = z reached by damped Newton from the seed set,
// grouped into cycles of exact period k | n, classified, and (for real maps)
// given a realness verdict. Orbits are sorted by (period, first point).
PeriodicSearch find_periodic_orbits(const ComposedMap& map, int n, const PeriodicOptions& opts);

// Repeats the search with growing seed sets until the completeness audit
// reports no shortfall or `rounds` is exhausted. Results are unions.
PeriodicSearch find_periodic_orbits_escalating(const ComposedMap& map, int n, const PeriodicOptions& opts,
                                               int rounds = 4);

// Multipliers from the ordered derivative product, with class by margin.
PeriodicOrbit classify_orbit(const ComposedMap& map, PeriodicOrbit orbit, double margin = 1e-3);

// Throws NotApplicable when the map has non-real coefficients.
Realness realness_verdict(const ComposedMap& map, const PeriodicOrbit& orbit, double tol_im);

struct CompletenessAudit {
  long long expected = 0;
  long long found_count = 0;
  long long missing = 0;
  // Indices of orbits where D(f^n) - I is nearly singular (possible multiple root).
  std::vector<std::size_t> multiplicity_flags;
  // found_count + missing == expected and found_count <= expected.
  bool consistent = true;
};

CompletenessAudit completeness_audit(const ComposedMap& map, int n, const std::vector<PeriodicOrbit>& found);

// Distinct solutions of f^n(z) = z represented by orbits whose period divides n.
long long solution_count(const std::vector<PeriodicOrbit>& orbits, int n);
long long real_solution_count(const std::vector<PeriodicOrbit>& orbits, int n);

// Number of steps a floating-point orbit started at a cycle point can be
// trusted before rounding errors, amplified by the multipliers, exceed 1e-6:
// forward uses |lambda_u|, backward 1/|lambda_s|. Capped at `cap`.
int shadowing_horizon(const PeriodicOrbit& orbit, bool forward, int cap);

// Every cycle point lies in the bidisk containing K and passes the forward and
// backward escape tests up to the shadowing horizon.
bool periodic_orbit_bounded(const ComposedMap& map, const PeriodicOrbit& orbit, int cap);

// Damped Newton polish of a single point towards f^n(z) = z.
std::optional<Point2> newton_periodic(const ComposedMap& map, Point2 z, int n, int max_iter, double search_radius);

}  // namespace henon
