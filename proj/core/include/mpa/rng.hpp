#pragma once

#include <cstdint>
#include <random>

namespace mpa {

// Deterministic random source. All distribution transforms are implemented
// here on top of the raw 64-bit stream so that draws are reproducible across
// platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform on the open interval (0,1); never returns exactly 0 or 1.
  double uniform();
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Standard logistic: log(u) - log(1-u).
  double logistic();

  // Derived generator for an independent stream, e.g. per (step, element).
  Rng fork(std::uint64_t a, std::uint64_t b = 0) const;

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
};

// SplitMix64 finalizer, used for seed derivation and tiny hashes.
std::uint64_t mix64(std::uint64_t x);

}  // namespace mpa
