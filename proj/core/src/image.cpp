#include "mpa/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mpa/error.hpp"

namespace mpa {

namespace {

// Reads one PNM token, skipping whitespace and # comments.
std::string next_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    char c = char(b[pos]);
    if (c == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos])) &&
         b[pos] != '#')
    tok += char(b[pos++]);
  if (tok.empty()) throw FormatError("truncated PNM header");
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw FormatError(std::string("bad PNM ") + what + ": " + tok);
  long v = std::stol(tok);
  if (v < 1 || v > 1 << 20) throw FormatError(std::string("PNM ") + what + " out of range");
  return int(v);
}

}  // namespace

Image make_image(int width, int height, float fill) {
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.assign(std::size_t(width) * height * 3, fill);
  return img;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw FormatError("not a binary PPM (want P6)");
  int w = parse_dim(next_token(bytes, pos), "width");
  int h = parse_dim(next_token(bytes, pos), "height");
  if (next_token(bytes, pos) != "255") throw FormatError("PPM maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing whitespace before PPM raster");
  ++pos;
  std::size_t need = std::size_t(w) * h * 3;
  if (bytes.size() - pos < need) throw FormatError("PPM raster truncated");
  Image img = make_image(w, h);
  for (std::size_t i = 0; i < need; ++i) img.rgb[i] = float(bytes[pos + i]) / 255.0f;
  return img;
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open image: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size), 0);
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw FormatError("read failed: " + path);
  return decode_ppm(bytes);
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.rgb.size());
  for (float v : img.rgb) {
    float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(std::uint8_t(std::lround(c * 255.0f)));
  }
  return out;
}

void write_ppm(const std::string& path, const Image& img) {
  auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw FormatError("write failed: " + path);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& on) {
  if (on.size() != std::size_t(width) * height)
    throw std::invalid_argument("write_pgm: grid size mismatch");
  std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f.write(header.data(), std::streamsize(header.size()));
  for (std::uint8_t v : on) {
    char byte = v ? char(255) : char(0);
    f.write(&byte, 1);
  }
  if (!f) throw FormatError("write failed: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open image: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size), 0);
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw FormatError("read failed: " + path);
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5") throw FormatError("not a binary PGM (want P5)");
  GrayImage out;
  out.width = parse_dim(next_token(bytes, pos), "width");
  out.height = parse_dim(next_token(bytes, pos), "height");
  if (next_token(bytes, pos) != "255") throw FormatError("PGM maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing whitespace before PGM raster");
  ++pos;
  std::size_t need = std::size_t(out.width) * out.height;
  if (bytes.size() - pos < need) throw FormatError("PGM raster truncated");
  out.gray.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + need));
  return out;
}

void write_pgm_values(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& values) {
  if (values.size() != std::size_t(width) * height)
    throw std::invalid_argument("write_pgm_values: grid size mismatch");
  std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f.write(header.data(), std::streamsize(header.size()));
  f.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size()));
  if (!f) throw FormatError("write failed: " + path);
}

Image pad_to_multiple(const Image& img, int multiple) {
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("empty image");
  int w = (img.width + multiple - 1) / multiple * multiple;
  int h = (img.height + multiple - 1) / multiple * multiple;
  if (w == img.width && h == img.height) return img;
  Image out = make_image(w, h);
  for (int y = 0; y < h; ++y) {
    int sy = std::min(y, img.height - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::min(x, img.width - 1);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image crop_image(const Image& img, int width, int height) {
  if (width > img.width || height > img.height)
    throw std::invalid_argument("crop_image: target larger than source");
  Image out = make_image(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("psnr: size mismatch");
  double mse = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    double d = double(a.rgb[i]) - double(b.rgb[i]);
    mse += d * d;
  }
  mse /= double(a.rgb.size());
  return -10.0 * std::log10(std::max(mse, 1e-12));
}

}  // namespace mpa
