#include "pkm/metrics.hpp"

#include <cmath>

#include "pkm/errors.hpp"

namespace pkm::metrics {

double kl_to_uniform(const AccessMass& mass) {
  if (mass.total <= 0.0) throw ConfigError("kl_to_uniform: zero total mass");
  const double slots = static_cast<double>(mass.mass.size());
  double kl = 0.0;
  for (double m : mass.mass) {
    if (m <= 0.0) continue;
    const double p = m / mass.total;
    kl += p * std::log(p * slots);
  }
  return kl;
}

}  // namespace pkm::metrics
