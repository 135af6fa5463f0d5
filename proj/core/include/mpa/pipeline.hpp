#pragma once

// End-to-end compression: image -> latent -> range-coded container and back.
// The hyper latent is coded first under its static per-channel prior; the
// latent follows under per-element gaussian tables conditioned on the decoded
// hyper latent, so both sides build identical tables.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpa/codec.hpp"
#include "mpa/container.hpp"
#include "mpa/entropy.hpp"
#include "mpa/error.hpp"
#include "mpa/image.hpp"
#include "mpa/tensor.hpp"

namespace mpa {

struct CompressStats {
  double q = 0.0;        // quality actually coded (snapped to the header grid)
  double bpp_est = 0.0;  // from the model's bin likelihoods
  double bpp_act = 0.0;  // container bytes / image pixels
  std::vector<ImportanceMask> enc_masks;
};

struct DecompressResult {
  Image image;
  double q = 0.0;
  std::vector<ImportanceMask> dec_masks;  // deepest routed stage first
};

namespace detail {

template <typename T>
TensorPtr<T> image_leaf(const Image& img) {
  std::vector<T> v(img.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(img.rgb[i]);
  return make_leaf<T>({img.height, img.width, 3}, std::move(v));
}

inline int symbol_of(double v) { return int(std::lround(v)); }

// Hyper latent symbols share one table per channel.
template <typename T>
std::vector<CdfTable> hyper_tables(const CodecModel<T>& model) {
  std::vector<double> loc, scale;
  model.hyper_prior(&loc, &scale);
  std::vector<CdfTable> tables;
  tables.reserve(loc.size());
  for (std::size_t c = 0; c < loc.size(); ++c)
    tables.push_back(CdfTable::logistic(loc[c], scale[c]));
  return tables;
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> compress_image(CodecModel<T>& model, const Image& img,
                                         double q, CompressStats* stats = nullptr) {
  if (img.width < 1 || img.height < 1) throw ConfigError("empty image");
  double qq = quantize_quality(q, double(model.config().quality_levels));

  Image padded = pad_to_multiple(img, CodecModel<T>::downsample_factor());
  auto x = detail::image_leaf<T>(padded);
  EncodeResult<T> enc = model.encode(x, qq);
  HyperResult<T> hy = model.hyper(enc.y, QuantMode::round);

  RangeEncoder zenc;
  auto ztables = detail::hyper_tables(model);
  int zc = int(ztables.size());
  for (std::size_t i = 0; i < hy.z_q->numel(); ++i)
    zenc.encode(ztables[i % zc], detail::symbol_of(double(hy.z_q->value[i])));

  RangeEncoder yenc;
  for (std::size_t i = 0; i < hy.y_q->numel(); ++i) {
    CdfTable t = CdfTable::gaussian(double(hy.mu->value[i]), double(hy.sigma->value[i]));
    yenc.encode(t, detail::symbol_of(double(hy.y_q->value[i])));
  }

  Container c;
  c.q = qq;
  c.width = std::uint32_t(img.width);
  c.height = std::uint32_t(img.height);
  c.z_bytes = zenc.finish();
  c.y_bytes = yenc.finish();
  auto bytes = write_container(c);

  if (stats) {
    double pixels = double(img.width) * img.height;
    stats->q = qq;
    stats->bpp_est = double(hy.bits->value[0]) / pixels;
    stats->bpp_act = double(bytes.size()) * 8.0 / pixels;
    stats->enc_masks = enc.masks;
  }
  return bytes;
}

template <typename T>
DecompressResult decompress_image(CodecModel<T>& model,
                                  const std::vector<std::uint8_t>& bytes,
                                  double alpha, Task task) {
  Container c = parse_container(bytes);
  int ds = CodecModel<T>::downsample_factor();
  int yh = (int(c.height) + ds - 1) / ds;
  int yw = (int(c.width) + ds - 1) / ds;
  int zh = CodecModel<T>::hyper_extent(yh);
  int zw = CodecModel<T>::hyper_extent(yw);
  int zc = model.config().hyper_channels;
  int yc = model.latent_channels();

  auto ztables = detail::hyper_tables(model);
  RangeDecoder zdec(c.z_bytes);
  std::vector<T> zv(std::size_t(zh) * zw * zc);
  for (std::size_t i = 0; i < zv.size(); ++i)
    zv[i] = T(zdec.decode(ztables[i % std::size_t(zc)]));
  auto z_q = make_leaf<T>({zh, zw, zc}, std::move(zv));

  auto [mu, sigma] = model.hyper_stats(z_q, yh, yw);
  RangeDecoder ydec(c.y_bytes);
  std::vector<T> yv(std::size_t(yh) * yw * yc);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    CdfTable t = CdfTable::gaussian(double(mu->value[i]), double(sigma->value[i]));
    yv[i] = T(ydec.decode(t));
  }
  auto y_q = make_leaf<T>({yh, yw, yc}, std::move(yv));

  DecodeResult<T> dec = model.decode(y_q, c.q, alpha, task);

  DecompressResult out;
  out.q = c.q;
  out.dec_masks = dec.masks;
  Image full = make_image(yw * ds, yh * ds);
  for (std::size_t i = 0; i < full.rgb.size(); ++i) {
    double v = double(dec.image->value[i]);
    full.rgb[i] = float(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
  }
  out.image = crop_image(full, int(c.width), int(c.height));
  return out;
}

}  // namespace mpa
