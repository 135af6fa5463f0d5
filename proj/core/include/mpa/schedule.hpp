#pragma once

#include <stdexcept>

namespace mpa {

// Mask budget schedules. The encoder keeps a fraction of positions on the
// main (high-quality) path that grows geometrically with the quality level;
// the decoder side keeps 1 - alpha.
struct RatioSchedule {
  double beta = 5.0;
  double q_max = 8.0;

  RatioSchedule() = default;
  RatioSchedule(double beta_, double q_max_) : beta(beta_), q_max(q_max_) {
    if (!(beta > 1.0)) throw std::invalid_argument("RatioSchedule: beta must be > 1");
    if (!(q_max >= 2.0)) throw std::invalid_argument("RatioSchedule: q_max must be >= 2");
  }

  // rho_enc(q) = (beta^((q-1)/(q_max-1)) - 1) / (beta - 1); 0 at q=1, 1 at q=q_max.
  double ratio_encoder(double q) const;
};

// rho_dec(alpha) = 1 - alpha for alpha in [0,1].
double ratio_decoder(double alpha);

}  // namespace mpa
