#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "henon/types.hpp"

namespace henon {

// One elementary factor (x, y) -> (y, p(y) - delta * x).
class ElementaryFactor {
 public:
  // p_coeffs are constant term first. Requires deg p >= 2 with a nonzero
  // leading coefficient and delta != 0.
  ElementaryFactor(std::vector<Complex> p_coeffs, Complex delta);

  const std::vector<Complex>& p_coeffs() const { return p_; }
  Complex delta() const { return delta_; }
  int degree() const { return static_cast<int>(p_.size()) - 1; }
  Complex leading() const { return p_.back(); }
  bool is_real() const;

  template <class C>
  C p(const C& y) const {
    C acc = lift<C>(p_.back());
    for (auto it = p_.rbegin() + 1; it != p_.rend(); ++it) acc = acc * y + lift<C>(*it);
    return acc;
  }

  template <class C>
  C dp(const C& y) const {
    C acc = C(static_cast<double>(degree())) * lift<C>(p_.back());
    for (int j = degree() - 1; j >= 1; --j) acc = acc * y + C(static_cast<double>(j)) * lift<C>(p_[j]);
    return acc;
  }

  template <class C>
  BasicPoint2<C> apply(const BasicPoint2<C>& z) const {
    return {z.y, p(z.y) - lift<C>(delta_) * z.x};
  }

  template <class C>
  BasicPoint2<C> apply_inverse(const BasicPoint2<C>& z) const {
    return {(p(z.x) - z.y) / lift<C>(delta_), z.x};
  }

  template <class C>
  BasicMat2<C> jacobian(const BasicPoint2<C>& z) const {
    return {C(0), C(1), -lift<C>(delta_), dp(z.y)};
  }

  template <class C>
  static C lift(const Complex& c) {
    return C(c.real(), c.imag());
  }

 private:
  std::vector<Complex> p_;
  Complex delta_;
};

// The classical real quadratic map h(x, y) = (1 - a x^2 + y, b x), kept so
// points can be moved between classical and normal-form coordinates through
// tau(x, y) = (y / b, x).
struct ClassicalOrigin {
  double a = 0.0;
  double b = 0.0;

  Point2 to_normal(const Point2& classical) const { return {classical.y / b, classical.x}; }
  Point2 to_classical(const Point2& normal) const { return {normal.y, b * normal.x}; }
  Point2 apply_classical(const Point2& z) const { return {1.0 - a * z.x * z.x + z.y, b * z.x}; }
};

// A composition f = factors.back() o ... o factors.front() of elementary factors.
class ComposedMap {
 public:
  explicit ComposedMap(std::vector<ElementaryFactor> factors, std::optional<ClassicalOrigin> origin = std::nullopt);

  const std::vector<ElementaryFactor>& factors() const { return factors_; }
  int degree() const { return degree_; }
  Complex jac_det() const { return jac_det_; }
  bool is_real() const { return is_real_; }
  const std::optional<ClassicalOrigin>& classical() const { return origin_; }

  // The inverse rewritten in normal form: f^{-1} = S o g o S with S the
  // coordinate swap and g built from factors (p / delta, 1 / delta) in
  // reverse order. Lets backward dynamics reuse forward machinery.
  ComposedMap swapped_inverse() const;

  // Stable 64-bit fingerprint of the coefficients (FNV-1a over the bytes).
  std::uint64_t hash() const;

 private:
  std::vector<ElementaryFactor> factors_;
  int degree_ = 1;
  Complex jac_det_{1.0, 0.0};
  bool is_real_ = true;
  std::optional<ClassicalOrigin> origin_;
};

// Unchecked evaluation; may return non-finite values.
template <class C>
BasicPoint2<C> apply_raw(const ComposedMap& map, BasicPoint2<C> z) {
  for (const auto& f : map.factors()) z = f.apply(z);
  return z;
}

template <class C>
BasicPoint2<C> apply_inverse_raw(const ComposedMap& map, BasicPoint2<C> z) {
  const auto& fs = map.factors();
  for (auto it = fs.rbegin(); it != fs.rend(); ++it) z = it->apply_inverse(z);
  return z;
}

template <class C>
BasicMat2<C> derivative_raw(const ComposedMap& map, BasicPoint2<C> z) {
  auto m = BasicMat2<C>::identity();
  for (const auto& f : map.factors()) {
    m = f.jacobian(z) * m;
    z = f.apply(z);
  }
  return m;
}

// Checked operations: throw ErrorKind::Overflow on non-finite input or output.
Point2 apply(const ComposedMap& map, const Point2& z);
Point2 apply_inverse(const ComposedMap& map, const Point2& z);
Mat2 derivative(const ComposedMap& map, const Point2& z);
Mat2 derivative_inverse(const ComposedMap& map, const Point2& z);

// f^n(z) for n >= 0, or f^{-|n|}(z) for n < 0. Checked.
Point2 iterate(const ComposedMap& map, Point2 z, int n);

// Derivative of f^n at z as the ordered product along the orbit. Checked.
Mat2 derivative_iterate(const ComposedMap& map, Point2 z, int n);

// Normal form F(x, y) = (y, 1 - a y^2 + b x) of the classical map, conjugate
// through tau(x, y) = (y / b, x). Throws DegenerateParameter if b == 0.
ComposedMap from_classical_henon(double a, double b);

// The composition g o f (f applied first). Degrees multiply.
ComposedMap compose(const ComposedMap& f, const ComposedMap& g);

}  // namespace henon
