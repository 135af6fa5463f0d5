#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mpa/ops.hpp"
#include "mpa/param_store.hpp"

// Variable-rate channel gains. Each site (block input or the latent) owns a
// per-level table of log-gains; fractional qualities interpolate linearly in
// log space, i.e. geometrically in gain space. Encoder sites multiply,
// decoder sites divide with the same table so the two stay exact inverses.

namespace mpa {

template <typename T>
struct ScalingTable {
  int levels = 0;
  int channels = 0;
  TensorPtr<T> log_gain;  // [levels, C]

  // neutral table: every gain 1
  static ScalingTable create(ParameterStore<T>& store, const std::string& name,
                             int levels, int channels) {
    ScalingTable t;
    t.levels = levels;
    t.channels = channels;
    t.log_gain = store.create(name, {levels, channels},
                              std::vector<T>(std::size_t(levels) * channels, T(0)));
    return t;
  }

  // geometric ramp from `low` at level 1 up to `high` at the top level;
  // used for the latent site so coarser qualities start with smaller gains
  static ScalingTable create_ramp(ParameterStore<T>& store, const std::string& name,
                                  int levels, int channels, double low, double high) {
    if (!(low > 0.0 && high > 0.0)) throw ConfigError("scaling ramp endpoints must be positive");
    std::vector<T> init(std::size_t(levels) * channels);
    for (int l = 0; l < levels; ++l) {
      double f = levels == 1 ? 1.0 : double(l) / double(levels - 1);
      T lg = T(std::log(low) + f * (std::log(high) - std::log(low)));
      for (int c = 0; c < channels; ++c) init[std::size_t(l) * channels + c] = lg;
    }
    ScalingTable t;
    t.levels = levels;
    t.channels = channels;
    t.log_gain = store.create(name, {levels, channels}, std::move(init));
    return t;
  }

  // Gain vector for quality q in [1, levels]. Integer q returns the stored
  // row exactly; fractional q interpolates the two neighbouring rows in log
  // space.
  TensorPtr<T> gains(double q) const {
    if (!(q >= 1.0 && q <= double(levels)))
      throw std::domain_error("scaling gains: quality outside [1, levels]");
    int lo = int(std::floor(q)) - 1;
    double frac = q - std::floor(q);
    if (frac == 0.0) return exp_of(slice_row(log_gain, lo));
    auto a = mul_scalar(slice_row(log_gain, lo), T(1.0 - frac));
    auto b = mul_scalar(slice_row(log_gain, lo + 1), T(frac));
    return exp_of(add(a, b));
  }
};

template <typename T>
TensorPtr<T> sf_modulate(const TensorPtr<T>& x, const ScalingTable<T>& table, double q) {
  return mul_channels(x, table.gains(q));
}

template <typename T>
TensorPtr<T> isf_demodulate(const TensorPtr<T>& x, const ScalingTable<T>& table, double q) {
  return div_channels(x, table.gains(q));
}

}  // namespace mpa
