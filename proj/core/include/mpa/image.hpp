#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpa {

// RGB image, HWC float in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  float& at(int y, int x, int c) { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
};

Image make_image(int width, int height, float fill = 0.0f);

// Binary PPM (P6, maxval 255). Pixels are mapped to [0,1] by dividing by 255.
Image read_ppm(const std::string& path);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::string& path, const Image& img);
std::vector<std::uint8_t> encode_ppm(const Image& img);

// Binary PGM (P5) of a binary grid: 255 where on, 0 where off.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& on);

// 8-bit grayscale PGM with values stored verbatim (used for label maps).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> gray;
};

GrayImage read_pgm(const std::string& path);
void write_pgm_values(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& values);

// Replicate-edge padding up to the next multiple; returns the input when
// already aligned.
Image pad_to_multiple(const Image& img, int multiple);
Image crop_image(const Image& img, int width, int height);

double psnr(const Image& a, const Image& b);

}  // namespace mpa
