#pragma once

// 113-bit extended precision (IEEE binary128) for oracle rechecks.

#include <boost/multiprecision/complex128.hpp>
#include <boost/multiprecision/float128.hpp>

#include "henon/map_core.hpp"

namespace henon {

enum class Precision { Double, Extended };

using ExtReal = boost::multiprecision::float128;
using ExtComplex = boost::multiprecision::complex128;
using ExtPoint2 = BasicPoint2<ExtComplex>;

inline ExtComplex to_ext(const Complex& c) { return ExtComplex(c.real(), c.imag()); }
inline ExtPoint2 to_ext(const Point2& z) { return {to_ext(z.x), to_ext(z.y)}; }
inline Complex to_double(const ExtComplex& c) {
  return {static_cast<double>(c.real()), static_cast<double>(c.imag())};
}
inline Point2 to_double(const ExtPoint2& z) { return {to_double(z.x), to_double(z.y)}; }

inline ExtReal norm_max(const ExtPoint2& z) {
  using boost::multiprecision::abs;
  const ExtReal ax = abs(z.x);
  const ExtReal ay = abs(z.y);
  return ax > ay ? ax : ay;
}

// max_i |f(z_i) - z_{i+1 mod k}| evaluated in extended precision.
double orbit_residual_extended(const ComposedMap& map, const std::vector<Point2>& cycle);

// |f^n(z) - z| in extended precision.
double periodic_residual_extended(const ComposedMap& map, const Point2& z, int n);

}  // namespace henon
