#include "swire/util/random.hpp"

#include <cmath>
#include <numbers>

namespace swire {

double normal(Rng& rng, double mean, double stddev) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace swire
