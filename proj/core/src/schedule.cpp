#include "mpa/schedule.hpp"

#include <cmath>

namespace mpa {

double RatioSchedule::ratio_encoder(double q) const {
  if (!(q >= 1.0 && q <= q_max))
    throw std::domain_error("quality must lie in [1, q_max]");
  return (std::pow(beta, (q - 1.0) / (q_max - 1.0)) - 1.0) / (beta - 1.0);
}

double ratio_decoder(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::domain_error("alpha must lie in [0, 1]");
  return 1.0 - alpha;
}

}  // namespace mpa
