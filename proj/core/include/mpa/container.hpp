#pragma once

#include <cstdint>
#include <vector>

namespace mpa {

// On-disk bitstream layout: "MPA1", version byte, quality as unsigned 8.8
// fixed point, original width and height, then the length-prefixed
// hyper-latent and latent segments. Header is 23 bytes before segment data.
struct Container {
  double q = 1.0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> z_bytes;
  std::vector<std::uint8_t> y_bytes;
};

constexpr std::size_t kContainerHeaderBytes = 23;

// Snap q onto the 1/256 grid the header can represent. Encoding uses the
// snapped value everywhere so encoder and decoder see identical q.
double quantize_quality(double q, double q_max);

std::vector<std::uint8_t> write_container(const Container& c);
Container parse_container(const std::vector<std::uint8_t>& bytes);

}  // namespace mpa
