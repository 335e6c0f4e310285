#include "henon/extended.hpp"

namespace henon {

double orbit_residual_extended(const ComposedMap& map, const std::vector<Point2>& cycle) {
  ExtReal worst = 0;
  const std::size_t k = cycle.size();
  for (std::size_t i = 0; i < k; ++i) {
    const ExtPoint2 image = apply_raw(map, to_ext(cycle[i]));
    const ExtReal r = norm_max(image - to_ext(cycle[(i + 1) % k]));
    if (r > worst) worst = r;
  }
  return static_cast<double>(worst);
}

double periodic_residual_extended(const ComposedMap& map, const Point2& z, int n) {
  ExtPoint2 w = to_ext(z);
  for (int i = 0; i < n; ++i) w = apply_raw(map, w);
  return static_cast<double>(norm_max(w - to_ext(z)));
}

}  // namespace henon
