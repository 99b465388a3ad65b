#include "pct/rng.hpp"

#include <cmath>
#include <numbers>

namespace pct {

double standard_normal(Rng& rng) {
  // Box-Muller, discarding the second variate to stay stateless.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pct
