#include "henon/map_core.hpp"

#include <cstring>

namespace henon {

ElementaryFactor::ElementaryFactor(std::vector<Complex> p_coeffs, Complex delta)
    : p_(std::move(p_coeffs)), delta_(delta) {
  if (p_.size() < 3) throw Error(ErrorKind::InvalidArgument, "elementary factor needs deg p >= 2");
  if (p_.back() == Complex(0.0)) throw Error(ErrorKind::InvalidArgument, "leading coefficient of p is zero");
  if (delta_ == Complex(0.0)) throw Error(ErrorKind::DegenerateParameter, "delta must be nonzero");
  for (const auto& c : p_)
    if (!is_finite(c)) throw Error(ErrorKind::InvalidArgument, "non-finite coefficient");
  if (!is_finite(delta_)) throw Error(ErrorKind::InvalidArgument, "non-finite delta");
}

bool ElementaryFactor::is_real() const {
  if (delta_.imag() != 0.0) return false;
  for (const auto& c : p_)
    if (c.imag() != 0.0) return false;
  return true;
}

ComposedMap::ComposedMap(std::vector<ElementaryFactor> factors, std::optional<ClassicalOrigin> origin)
    : factors_(std::move(factors)), origin_(origin) {
  if (factors_.empty()) throw Error(ErrorKind::InvalidArgument, "composed map needs at least one factor");
  for (const auto& f : factors_) {
    degree_ *= f.degree();
    jac_det_ *= f.delta();
    is_real_ = is_real_ && f.is_real();
  }
}

ComposedMap ComposedMap::swapped_inverse() const {
  std::vector<ElementaryFactor> inv;
  inv.reserve(factors_.size());
  for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
    std::vector<Complex> p = it->p_coeffs();
    for (auto& c : p) c /= it->delta();
    inv.emplace_back(std::move(p), 1.0 / it->delta());
  }
  return ComposedMap(std::move(inv));
}

std::uint64_t ComposedMap::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  };
  for (const auto& f : factors_) {
    mix(static_cast<double>(f.degree()));
    for (const auto& c : f.p_coeffs()) {
      mix(c.real());
      mix(c.imag());
    }
    mix(f.delta().real());
    mix(f.delta().imag());
  }
  return h;
}

namespace {

void require_finite(const Point2& z, const char* where) {
  if (!is_finite(z)) throw Error(ErrorKind::Overflow, where);
}

void require_finite(const Mat2& m, const char* where) {
  if (!is_finite(m.a) || !is_finite(m.b) || !is_finite(m.c) || !is_finite(m.d)) throw Error(ErrorKind::Overflow, where);
}

}  // namespace

Point2 apply(const ComposedMap& map, const Point2& z) {
  require_finite(z, "apply: non-finite input");
  Point2 out = apply_raw(map, z);
  require_finite(out, "apply: magnitude exceeds floating-point range");
  return out;
}

Point2 apply_inverse(const ComposedMap& map, const Point2& z) {
  require_finite(z, "apply_inverse: non-finite input");
  Point2 out = apply_inverse_raw(map, z);
  require_finite(out, "apply_inverse: magnitude exceeds floating-point range");
  return out;
}

Mat2 derivative(const ComposedMap& map, const Point2& z) {
  require_finite(z, "derivative: non-finite input");
  Mat2 m = derivative_raw(map, z);
  require_finite(m, "derivative: overflow");
  return m;
}

Mat2 derivative_inverse(const ComposedMap& map, const Point2& z) {
  // D(f^{-1})(z) = Df(f^{-1} z)^{-1}
  const Point2 w = apply_inverse(map, z);
  const Mat2 m = derivative(map, w);
  const Complex det = m.det();
  return {m.d / det, -m.b / det, -m.c / det, m.a / det};
}

Point2 iterate(const ComposedMap& map, Point2 z, int n) {
  for (int i = 0; i < n; ++i) z = apply(map, z);
  for (int i = 0; i < -n; ++i) z = apply_inverse(map, z);
  return z;
}

Mat2 derivative_iterate(const ComposedMap& map, Point2 z, int n) {
  Mat2 m = Mat2::identity();
  for (int i = 0; i < n; ++i) {
    m = derivative(map, z) * m;
    z = apply(map, z);
  }
  for (int i = 0; i < -n; ++i) {
    m = derivative_inverse(map, z) * m;
    z = apply_inverse(map, z);
  }
  return m;
}

ComposedMap from_classical_henon(double a, double b) {
  if (b == 0.0) throw Error(ErrorKind::DegenerateParameter, "classical Henon map needs b != 0");
  if (a == 0.0) throw Error(ErrorKind::DegenerateParameter, "classical Henon map needs a != 0 for degree 2");
  std::vector<ElementaryFactor> fs;
  fs.emplace_back(std::vector<Complex>{1.0, 0.0, -a}, Complex(-b, 0.0));
  return ComposedMap(std::move(fs), ClassicalOrigin{a, b});
}

ComposedMap compose(const ComposedMap& f, const ComposedMap& g) {
  std::vector<ElementaryFactor> fs = f.factors();
  fs.insert(fs.end(), g.factors().begin(), g.factors().end());
  return ComposedMap(std::move(fs));
}

}  // namespace henon
