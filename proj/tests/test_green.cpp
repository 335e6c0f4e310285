#include <doctest.h>

#include <cmath>
#include <random>

#include "henon/green.hpp"
#include "oracles.hpp"

using namespace henon;

namespace {

ComposedMap solenoid() { return ComposedMap({ElementaryFactor({{0.0}, {0.0}, {1.0}}, {0.05})}); }

Point2 random_point(std::mt19937_64& rng, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  return {{u(rng), u(rng)}, {u(rng), u(rng)}};
}

Point2 normal_fixed_point(double a, double b, int i) {
  const auto p = oracle::to_normal(oracle::classical_fixed_points(a, b)[i], b);
  return {p.x, p.y};
}

}  // namespace

TEST_SUITE("green") {

TEST_CASE("filtration radius for y^2 with unit jacobian") {
  const ComposedMap f({ElementaryFactor({{0.0}, {0.0}, {1.0}}, {1.0})});
  CHECK(filtration_ratio(f.factors()[0], 3.0) == doctest::Approx(1.0 / 3.0));
  CHECK(filtration_holds(f, 3.0));
  CHECK_FALSE(filtration_holds(f, 2.0));
  const FiltrationCertificate c = filtration_radius(f);
  CHECK(c.radius >= 3.0);
  CHECK(filtration_holds(f, c.radius));
  CHECK_THROWS_AS(make_certificate(f, 1.0), Error);
}

TEST_CASE("filtration ratio decreases with the radius") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  double prev = filtration_ratio(f.factors()[0], 1.0);
  for (double r = 1.5; r < 100.0; r *= 1.5) {
    const double cur = filtration_ratio(f.factors()[0], r);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("escape region is forward invariant with doubling on its boundary") {
  for (const ComposedMap& f : {from_classical_henon(1.4, 0.3), solenoid(), from_classical_henon(5.0, -0.3)}) {
    const FiltrationCertificate c = filtration_radius(f);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    for (int i = 0; i < 10000; ++i) {
      // Alternate between the two boundary pieces |y| = R and |x| = |y|.
      const double ay = i % 2 == 0 ? c.radius : c.radius * (1.0 + 3.0 * u(rng));
      const double ax = i % 2 == 0 ? c.radius * u(rng) : ay;
      const double t1 = 2.0 * M_PI * u(rng), t2 = 2.0 * M_PI * u(rng);
      const Point2 z{std::polar(ax, t1), std::polar(ay, t2)};
      const Point2 w = henon::apply(f, z);
      if (!c.in_escape_region(w) || std::abs(w.y) < 2.0 * std::abs(z.y)) ++failures;
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("green vanishes on the fixed points and is positive off K") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  for (int i = 0; i < 2; ++i) {
    const Point2 p = normal_fixed_point(1.4, 0.3, i);
    const GreenEstimate gp = green_plus(f, p, 1e-10, 60);
    // Backward rounding errors grow by 1/|lambda_s| ~ 6.4 per step, so the
    // floating-point orbit only stays near p for about a dozen steps.
    const GreenEstimate gm = green_minus(f, p, 1e-10, 10);
    CHECK(gp.status == GreenStatus::BoundedUpToN);
    CHECK(gp.value == 0.0);
    CHECK(gm.status == GreenStatus::BoundedUpToN);
    CHECK(gm.value == 0.0);
  }
  const GreenEstimate far = green_plus(f, {{0.0}, {100.0}}, 1e-10, 60);
  CHECK(far.status == GreenStatus::Escaped);
  CHECK(far.value > 0.0);
}

TEST_CASE("functional equation for G+ and G-") {
  for (const ComposedMap& f : {from_classical_henon(1.4, 0.3), solenoid()}) {
    const GreenEvaluator g(f);
    const double tol = 1e-10;
    const double d = f.degree();
    std::mt19937_64 rng(5);
    int tested_plus = 0, tested_minus = 0;
    for (int i = 0; i < 400; ++i) {
      const Point2 z = random_point(rng, 3.0);
      const GreenEstimate a = g.plus(z, tol, 200);
      if (a.status == GreenStatus::Escaped) {
        const GreenEstimate b = g.plus(henon::apply(f, z), tol, 200);
        REQUIRE(b.status == GreenStatus::Escaped);
        CHECK(std::abs(b.value - d * a.value) <= 2.0 * d * tol);
        ++tested_plus;
      }
      const GreenEstimate m = g.minus(z, tol, 200);
      if (m.status == GreenStatus::Escaped) {
        const GreenEstimate n = g.minus(apply_inverse(f, z), tol, 200);
        REQUIRE(n.status == GreenStatus::Escaped);
        CHECK(std::abs(n.value - d * m.value) <= 2.0 * d * tol);
        ++tested_minus;
      }
    }
    CHECK(tested_plus > 100);
    CHECK(tested_minus > 100);
  }
}

TEST_CASE("agrees with a high-precision direct limit") {
  const std::vector<std::complex<double>> p{0.0, 0.0, 1.0};
  for (Point2 z : {Point2{{0.0}, {1e6}}, Point2{{0.3, 0.1}, {1.2, -0.4}}, Point2{{2.0}, {0.5, 1.0}}}) {
    const GreenEstimate g = green_plus(solenoid(), z, 1e-12, 200);
    REQUIRE(g.status == GreenStatus::Escaped);
    const double ref = oracle::green_direct_limit(p, 0.05, z.x, z.y, 40);
    CHECK(std::abs(g.value - ref) < 1e-8 * std::max(1.0, ref));
  }
}

TEST_CASE("certified error bound covers further iteration") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  std::mt19937_64 rng(9);
  int tested = 0;
  for (int i = 0; i < 200; ++i) {
    const Point2 z = random_point(rng, 2.0);
    const GreenEstimate coarse = green_plus(f, z, 1e-4, 200);
    if (coarse.status != GreenStatus::Escaped) continue;
    const GreenEstimate fine = green_plus(f, z, 1e-14, coarse.n_used + 3);
    CHECK(coarse.err_bound <= 1e-4);
    CHECK(std::abs(coarse.value - fine.value) <= coarse.err_bound + 1e-15);
    ++tested;
  }
  CHECK(tested > 50);
}

TEST_CASE("real escape locus is bracketed monotonically in |y|") {
  const GreenEvaluator g(solenoid());
  bool escaped_seen = false;
  double first_escape = 0.0, last_bounded = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double y = 2.0 * i / 400.0;
    const OrbitTest t = g.forward_test({{0.0}, {y}}, 200);
    if (t.status == GreenStatus::Escaped) {
      if (!escaped_seen) first_escape = y;
      escaped_seen = true;
    } else {
      CHECK_FALSE(escaped_seen);
      last_bounded = y;
    }
  }
  REQUIRE(escaped_seen);
  CHECK(first_escape > last_bounded);
  CHECK(first_escape - last_bounded < 0.01);
  CHECK(last_bounded > 0.9);
  CHECK(first_escape < 1.1);
}

TEST_CASE("orbit test statuses") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  const GreenEvaluator g(f);
  const double r = g.forward_certificate().radius;
  const OrbitTest out = g.forward_test({{0.0}, {10.0 * r}}, 10);
  CHECK(out.status == GreenStatus::Escaped);
  CHECK(out.escape_step == 0);
  CHECK(g.forward_test(normal_fixed_point(1.4, 0.3, 0), 100).status == GreenStatus::BoundedUpToN);
  CHECK(bounded_set_radius(f) >= std::max(r, g.backward_certificate().radius));
  const GreenEstimate nan = green_plus(f, {{std::nan("")}, {0.0}}, 1e-10, 10);
  CHECK(nan.status == GreenStatus::Overflow);
}

TEST_CASE("extended precision matches double") {
  const GreenEvaluator g(from_classical_henon(1.4, 0.3));
  std::mt19937_64 rng(21);
  for (int i = 0; i < 30; ++i) {
    const Point2 z = random_point(rng, 2.0);
    const GreenEstimate a = g.plus(z, 1e-12, 200);
    const GreenEstimate b = g.plus_extended(z, 1e-12, 200);
    CHECK(a.status == b.status);
    CHECK(std::abs(a.value - b.value) < 1e-10);
    const GreenEstimate c = g.minus(z, 1e-12, 200);
    const GreenEstimate d = g.minus_extended(z, 1e-12, 200);
    CHECK(c.status == d.status);
    CHECK(std::abs(c.value - d.value) < 1e-10);
  }
}

TEST_CASE("raster conjugation symmetry on a real complex line") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  const AffineSlice line = AffineSlice::complex_line({{0.1}, {0.0}}, {{0.0}, {1.0}});
  ParamWindow w{-2.0, 2.0, -2.0, 2.0, 24, 24};
  RasterOptions o;
  o.tol = 1e-10;
  const RasterGrid grid = raster_green(f, line, w, o);
  for (int r = 0; r < w.ny; ++r)
    for (int c = 0; c < w.nx; ++c) {
      CHECK(grid.at(r, c).status == grid.at(w.ny - 1 - r, c).status);
      CHECK(std::abs(grid.at(r, c).value - grid.at(w.ny - 1 - r, c).value) < 1e-10);
    }
}

TEST_CASE("raster cells on the fixed point and far away") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  const Point2 p = normal_fixed_point(1.4, 0.3, 0);
  const double c = p.x.real();
  RasterOptions o;
  const RasterGrid near = raster_green(f, AffineSlice::real_plane(), {c - 0.05, c + 0.05, c - 0.05, c + 0.05, 5, 5}, o);
  CHECK(near.at(2, 2).status == GreenStatus::BoundedUpToN);
  CHECK(near.at(2, 2).value == 0.0);
  const RasterGrid far = raster_green(f, AffineSlice::real_plane(), {50.0, 60.0, 50.0, 60.0, 4, 4}, o);
  CHECK(far.count(GreenStatus::Escaped) == 16);
  for (const RasterCell& cell : far.cells) CHECK(cell.value > 1.0);
}

TEST_CASE("raster does not depend on the thread count") {
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  ParamWindow w{-2.0, 2.0, -2.0, 2.0, 16, 16};
  RasterOptions one, four;
  four.threads = 4;
  const RasterGrid a = raster_green(f, AffineSlice::real_plane(), w, one);
  const RasterGrid b = raster_green(f, AffineSlice::real_plane(), w, four);
  for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(a.cells[i].value == b.cells[i].value);
}

TEST_CASE("slice measure on a vertical line has unit mass") {
  // G+ ~ log|y| on {x = c} far out, so the flux through a large square is 2 pi.
  const ComposedMap f = from_classical_henon(1.4, 0.3);
  const AffineSlice line = AffineSlice::complex_line({{0.1}, {0.0}}, {{0.0}, {1.0}});
  RasterOptions o;
  o.tol = 1e-12;
  const RasterGrid coarse = slice_measure_raster(f, line, {-4.0, 4.0, -4.0, 4.0, 64, 64}, o);
  const RasterGrid fine = slice_measure_raster(f, line, {-4.0, 4.0, -4.0, 4.0, 128, 128}, o);
  CHECK(coarse.total_mass() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(fine.total_mass() - coarse.total_mass()) < 0.05 * coarse.total_mass());
  // Mass sits near K+: cells where G+ is well above zero carry almost none.
  double off = 0.0;
  for (const RasterCell& c : fine.cells)
    if (c.mass && c.value > 0.5) off += std::abs(*c.mass);
  CHECK(off < 0.02);
}

TEST_CASE("slice validation") {
  AffineSlice bad{{{0.0}, {0.0}}, {{1.0}, {0.0}}, {{2.0}, {0.0}}};
  CHECK_THROWS_AS(bad.validate(), Error);
  ParamWindow w{0.0, 1.0, 0.0, 1.0, 1, 4};
  CHECK_THROWS_AS(w.validate(), Error);
  AffineSlice::real_plane().validate();
  AffineSlice::complex_line({{0.0}, {0.0}}, {{0.0}, {1e300}}).validate();
}

}
