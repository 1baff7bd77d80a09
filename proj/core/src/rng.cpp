#include "pda/rng.hpp"

#include <cmath>
#include <numbers>

#include "pda/core.hpp"

namespace pda {

double Rng::gaussian() {
  // u1 in (0,1] so the log is finite.
  const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

FeatureVector Rng::unit_vector(std::size_t dim) {
  FeatureVector v(dim);
  while (true) {
    for (auto& x : v) x = gaussian();
    if (l2_norm(v) > 1e-6) break;  // astronomically rare retry
  }
  return l2_normalize(v);
}

}  // namespace pda
