#pragma once

#include <optional>
#include <string>
#include <vector>

#include "henon/manifolds.hpp"
#include "henon/periodic.hpp"

namespace henon {

// Finite sample of the saddle points of period <= n_max, weighted uniformly
// per point. A heuristic stand-in for the equilibrium measure.
struct SaddleEnsemble {
  int n_max = 0;
  std::vector<PeriodicOrbit> orbits;
  std::size_t point_count = 0;
  // Orbits of exact period n found at each n (index n - 1), all classes.
  std::vector<std::vector<PeriodicOrbit>> by_period;
};

struct EnsembleOptions {
  PeriodicOptions periodic;
  int escalation_rounds = 4;
  // Horizon for the per-point boundedness check (capped by shadowing).
  int bounded_horizon = 100;
};

// Throws EmptyEnsemble when no saddle of period <= n_max is found.
SaddleEnsemble build_ensemble(const ComposedMap& map, int n_max, const EnsembleOptions& opts = {});

struct OrbitExponents {
  int period = 1;
  double chi_u = 0.0;
  double chi_s = 0.0;
};

struct LyapunovEstimates {
  double chi_u = 0.0;
  double chi_s = 0.0;
  std::vector<OrbitExponents> per_orbit;
  // max over orbits of |chi_u + chi_s - log|jac_det||
  double sum_identity_error = 0.0;
  // Ensemble chi_u compared against log d; the inequality holds for the
  // true measure average, not orbit by orbit.
  double log_degree = 0.0;
};

LyapunovEstimates lyapunov_estimates(const ComposedMap& map, const SaddleEnsemble& ensemble);

struct DimensionEstimates {
  // log d / |chi_s|
  double hd_unstable_slice = 0.0;
  bool dissipative = false;
  // hd < 1, meaningful only when dissipative.
  bool dissipative_check = false;
};

DimensionEstimates dimension_estimates(const ComposedMap& map, const LyapunovEstimates& exponents);

struct GrowthRow {
  int n = 0;
  long long complex_count = 0;
  long long real_count = 0;
  long long expected = 0;
};

enum class HomoclinicRealness { NotScanned, Unknown, RealInWindow, NonReal };

const char* to_string(HomoclinicRealness h);

enum class EntropyVerdict { ConsistentWithMaxEntropy, BelowMaxEntropy };

const char* to_string(EntropyVerdict v);

struct MaxEntropyReport {
  int n_max = 0;
  bool all_periodic_real = true;
  std::optional<PeriodicOrbit> nonreal_witness;
  std::vector<PeriodicOrbit> sinks_found;
  HomoclinicRealness homoclinic = HomoclinicRealness::NotScanned;
  std::optional<HomoclinicPoint> homoclinic_witness;
  std::optional<PeriodicOrbit> homoclinic_saddle;
  IntersectionStats homoclinic_stats;
  std::size_t homoclinic_count = 0;
  std::vector<GrowthRow> growth_table;
  EntropyVerdict verdict = EntropyVerdict::ConsistentWithMaxEntropy;
  std::vector<std::string> reasons;
  // All orbits found, by period (index n - 1), for the machine-readable report.
  std::vector<std::vector<PeriodicOrbit>> orbits_by_period;
  std::optional<LyapunovEstimates> exponents;
  std::optional<DimensionEstimates> dimension;
};

// Saddle of lowest period with the smallest |lambda_u| (best-conditioned
// charts); with real_only, orbits without a Real verdict are skipped.
std::optional<PeriodicOrbit> weakest_saddle(const std::vector<std::vector<PeriodicOrbit>>& by_period, bool real_only);

struct ReportOptions {
  EnsembleOptions ensemble;
  bool homoclinic_scan = false;
  ChartOptions chart;
  IntersectionOptions intersections;
};

// Throws NotRealMap for maps with non-real coefficients.
MaxEntropyReport max_entropy_report(const ComposedMap& map, int n_max, const ReportOptions& opts = {});

// Human-readable rendering.
std::string render_text(const ComposedMap& map, const MaxEntropyReport& report);

}  // namespace henon
