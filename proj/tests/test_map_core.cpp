#include <doctest.h>

#include <cmath>
#include <random>

#include "henon/extended.hpp"
#include "henon/map_core.hpp"
#include "oracles.hpp"

using namespace henon;

namespace {

Point2 random_point(std::mt19937_64& rng, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  return {{u(rng), u(rng)}, {u(rng), u(rng)}};
}

ComposedMap cubic_pair() {
  ElementaryFactor f1({{0.2, 0.1}, {0.0, 0.0}, {1.0, 0.0}}, {0.5, 0.0});
  ElementaryFactor f2({{-0.3, 0.0}, {0.1, 0.0}, {0.0, 0.0}, {1.0, 0.0}}, {0.0, 0.7});
  return ComposedMap({f1, f2});
}

}  // namespace

TEST_SUITE("map_core") {

TEST_CASE("factor validation") {
  CHECK_THROWS_AS(ElementaryFactor({{1.0}, {1.0}}, {1.0}), Error);
  CHECK_THROWS_AS(ElementaryFactor({{1.0}, {0.0}, {1.0}}, {0.0}), Error);
  CHECK_THROWS_AS(ElementaryFactor({{1.0}, {1.0}, {0.0}}, {1.0}), Error);
  CHECK_THROWS_AS(ComposedMap(std::vector<ElementaryFactor>{}), Error);
  try {
    from_classical_henon(1.4, 0.0);
    FAIL("expected DegenerateParameter");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateParameter);
  }
}

TEST_CASE("degree, jacobian and realness of compositions") {
  const ComposedMap f = cubic_pair();
  CHECK(f.degree() == 6);
  CHECK(std::abs(f.jac_det() - Complex(0.0, 0.35)) < 1e-15);
  CHECK_FALSE(f.is_real());
  const ComposedMap h = from_classical_henon(1.4, 0.3);
  CHECK(h.is_real());
  CHECK(h.degree() == 2);
  CHECK(std::abs(h.jac_det() - Complex(-0.3)) < 1e-15);
  const ComposedMap hh = compose(h, h);
  CHECK(hh.degree() == 4);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Point2 z = random_point(rng, 1.0);
    CHECK(dist_max(henon::apply(hh, z), henon::apply(h, henon::apply(h, z))) < 1e-13);
    CHECK(std::abs(derivative(f, z).det() - f.jac_det()) < 1e-12 * (1.0 + std::abs(derivative(f, z).a)));
  }
}

TEST_CASE("inverse and swapped inverse") {
  const ComposedMap f = cubic_pair();
  const ComposedMap g = f.swapped_inverse();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Point2 z = random_point(rng, 1.5);
    CHECK(dist_max(apply_inverse(f, henon::apply(f, z)), z) < 1e-12);
    CHECK(dist_max(henon::apply(f, apply_inverse(f, z)), z) < 1e-12);
    // f^{-1} = S g S
    CHECK(dist_max(swap_xy(henon::apply(g, swap_xy(z))), apply_inverse(f, z)) < 1e-12);
  }
  CHECK(dist_max(iterate(f, iterate(f, Point2{{0.1}, {0.2}}, 3), -3), Point2{{0.1}, {0.2}}) < 1e-9);
}

TEST_CASE("derivative matches finite differences") {
  const ComposedMap f = cubic_pair();
  const Point2 z{{0.3, -0.2}, {0.1, 0.4}};
  const Mat2 m = derivative_iterate(f, z, 2);
  const double h = 1e-6;
  const Point2 dx = Complex(1.0 / (2 * h)) * (iterate(f, z + Point2{{h}, {0.0}}, 2) - iterate(f, z - Point2{{h}, {0.0}}, 2));
  const Point2 dy = Complex(1.0 / (2 * h)) * (iterate(f, z + Point2{{0.0}, {h}}, 2) - iterate(f, z - Point2{{0.0}, {h}}, 2));
  const double scale = 1.0 + norm_max(dx) + norm_max(dy);
  CHECK(std::abs(m.a - dx.x) < 1e-6 * scale);
  CHECK(std::abs(m.c - dx.y) < 1e-6 * scale);
  CHECK(std::abs(m.b - dy.x) < 1e-6 * scale);
  CHECK(std::abs(m.d - dy.y) < 1e-6 * scale);
  const Mat2 inv = derivative_inverse(f, henon::apply(f, z));
  const Mat2 id = inv * derivative(f, z);
  CHECK(std::abs(id.a - 1.0) < 1e-12);
  CHECK(std::abs(id.b) < 1e-12);
  CHECK(std::abs(id.c) < 1e-12);
  CHECK(std::abs(id.d - 1.0) < 1e-12);
}

TEST_CASE("classical conjugacy through tau") {
  for (auto [a, b] : {std::pair{1.4, 0.3}, {5.0, 0.3}, {0.1, 0.3}, {1.0, -0.2}}) {
    const ComposedMap F = from_classical_henon(a, b);
    const ClassicalOrigin& o = *F.classical();
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
      const Point2 z = random_point(rng, 1.0);
      CHECK(dist_max(o.to_normal(o.apply_classical(z)), henon::apply(F, o.to_normal(z))) < 1e-13);
      CHECK(dist_max(o.to_classical(o.to_normal(z)), z) < 1e-15);
    }
  }
}

TEST_CASE("fixed points of the classical map") {
  // Quadratic-formula fixed points transported to normal form are fixed by F.
  const double a = 1.4, b = 0.3;
  const ComposedMap F = from_classical_henon(a, b);
  const auto fps = oracle::classical_fixed_points(a, b);
  CHECK(fps[0].x.real() == doctest::Approx(0.6313544770895048).epsilon(1e-14));
  CHECK(fps[1].x.real() == doctest::Approx(-1.1313544770895048).epsilon(1e-14));
  for (const auto& p : fps) {
    const auto n = oracle::to_normal(p, b);
    const Point2 z{n.x, n.y};
    CHECK(dist_max(henon::apply(F, z), z) < 1e-14);
  }
}

TEST_CASE("checked operations report overflow") {
  const ComposedMap F = from_classical_henon(1.4, 0.3);
  try {
    iterate(F, Point2{{0.0}, {1e200}}, 3);
    FAIL("expected Overflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Overflow);
  }
  CHECK_THROWS_AS(henon::apply(F, Point2{{std::nan("")}, {0.0}}), Error);
}

TEST_CASE("hash is stable and separates maps") {
  CHECK(from_classical_henon(1.4, 0.3).hash() == from_classical_henon(1.4, 0.3).hash());
  CHECK(from_classical_henon(1.4, 0.3).hash() != from_classical_henon(1.4, 0.30000000000000004).hash());
  CHECK(cubic_pair().hash() != cubic_pair().swapped_inverse().hash());
}

TEST_CASE("extended residual agrees with double at a fixed point") {
  const ComposedMap F = from_classical_henon(1.4, 0.3);
  const auto p = oracle::to_normal(oracle::classical_fixed_points(1.4, 0.3)[0], 0.3);
  CHECK(periodic_residual_extended(F, {p.x, p.y}, 1) < 1e-15);
  CHECK(periodic_residual_extended(F, {p.x + 1e-3, p.y}, 1) > 1e-4);
}

}
