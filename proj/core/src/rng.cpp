#include "mpa/rng.hpp"

#include <cmath>

namespace mpa {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double Rng::uniform() {
  // 53-bit mantissa, offset by half an ulp so 0 and 1 are unreachable.
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next()) * n) >> 64);
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::logistic() {
  double u = uniform();
  return std::log(u) - std::log(1.0 - u);
}

Rng Rng::fork(std::uint64_t a, std::uint64_t b) const {
  std::uint64_t s = mix64(seed_ + 0x9E3779B97F4A7C15ull * (a + 1));
  s = mix64(s ^ (b + 0x6A09E667F3BCC909ull));
  return Rng(s);
}

}  // namespace mpa
