#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace henon {

using Complex = std::complex<double>;

enum class ErrorKind {
  InvalidArgument,
  DegenerateParameter,
  Overflow,
  IllConditioned,
  NotApplicable,
  NotASaddle,
  NearResonance,
  EmptyEnsemble,
  NotRealMap,
  Config,
  Internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// A point of C^2. The scalar type is a template parameter so the same
// evaluation code runs in double and in 113-bit extended precision.
template <class C>
struct BasicPoint2 {
  C x{};
  C y{};

  friend BasicPoint2 operator+(const BasicPoint2& a, const BasicPoint2& b) { return {a.x + b.x, a.y + b.y}; }
  friend BasicPoint2 operator-(const BasicPoint2& a, const BasicPoint2& b) { return {a.x - b.x, a.y - b.y}; }
  friend BasicPoint2 operator*(const C& s, const BasicPoint2& a) { return {s * a.x, s * a.y}; }
};

using Point2 = BasicPoint2<Complex>;

inline double norm_max(const Point2& z) { return std::max(std::abs(z.x), std::abs(z.y)); }
inline double dist_max(const Point2& a, const Point2& b) { return norm_max(a - b); }
inline bool is_finite(const Complex& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); }
inline bool is_finite(const Point2& z) { return is_finite(z.x) && is_finite(z.y); }
inline Point2 conj(const Point2& z) { return {std::conj(z.x), std::conj(z.y)}; }
inline Point2 swap_xy(const Point2& z) { return {z.y, z.x}; }
inline double max_imag(const Point2& z) { return std::max(std::abs(z.x.imag()), std::abs(z.y.imag())); }

// Row-major 2x2 complex matrix.
template <class C>
struct BasicMat2 {
  C a{}, b{}, c{}, d{};

  static BasicMat2 identity() { return {C(1), C(0), C(0), C(1)}; }

  C det() const { return a * d - b * c; }
  C trace() const { return a + d; }

  friend BasicMat2 operator*(const BasicMat2& l, const BasicMat2& r) {
    return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d, l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
  }
  friend BasicPoint2<C> operator*(const BasicMat2& m, const BasicPoint2<C>& v) {
    return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y};
  }
};

using Mat2 = BasicMat2<Complex>;

// Solves m * v = rhs by Cramer's rule; throws IllConditioned when the
// determinant vanishes relative to the entries.
Point2 solve(const Mat2& m, const Point2& rhs);

// Smallest singular value of a 2x2 complex matrix.
double smallest_singular_value(const Mat2& m);

}  // namespace henon
