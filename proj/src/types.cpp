#include "henon/types.hpp"

#include <algorithm>
#include <limits>

namespace henon {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateParameter: return "DegenerateParameter";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::NotApplicable: return "NotApplicable";
    case ErrorKind::NotASaddle: return "NotASaddle";
    case ErrorKind::NearResonance: return "NearResonance";
    case ErrorKind::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorKind::NotRealMap: return "NotRealMap";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Internal: return "Internal";
  }
  return "Unknown";
}

Point2 solve(const Mat2& m, const Point2& rhs) {
  const Complex det = m.det();
  const double scale = std::max({std::abs(m.a), std::abs(m.b), std::abs(m.c), std::abs(m.d)});
  if (!(std::abs(det) > std::numeric_limits<double>::epsilon() * scale * scale * 1e-4))
    throw Error(ErrorKind::IllConditioned, "singular 2x2 system");
  return {(m.d * rhs.x - m.b * rhs.y) / det, (m.a * rhs.y - m.c * rhs.x) / det};
}

double smallest_singular_value(const Mat2& m) {
  // Singular values squared are the eigenvalues of M^H M: s^2 = (F +- sqrt(F^2 - 4|det|^2)) / 2
  // with F the squared Frobenius norm. The small one is taken as |det|^2 / s_max^2 for accuracy.
  const double fro2 = std::norm(m.a) + std::norm(m.b) + std::norm(m.c) + std::norm(m.d);
  const double adet = std::abs(m.det());
  const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4.0 * adet * adet));
  const double smax2 = 0.5 * (fro2 + disc);
  if (smax2 == 0.0) return 0.0;
  return adet / std::sqrt(smax2);
}

}  // namespace henon
