#include "mpa/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mpa/error.hpp"

namespace mpa {

namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr int kMaxHalfWindow = 8192;

// Quantize bin probabilities (plus trailing escape mass) to frequencies that
// are each >= 1 and sum to exactly 2^16.
std::vector<std::uint32_t> quantize_freqs(const std::vector<double>& p) {
  std::vector<std::uint32_t> f(p.size());
  long sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    f[i] = std::uint32_t(std::max(1l, std::lround(p[i] * double(CdfTable::kTotal))));
    sum += f[i];
  }
  long diff = long(CdfTable::kTotal) - sum;
  while (diff != 0) {
    std::size_t top = 0;
    for (std::size_t i = 1; i < f.size(); ++i)
      if (f[i] > f[top]) top = i;
    if (diff > 0) {
      f[top] += std::uint32_t(diff);
      diff = 0;
    } else {
      long take = std::min<long>(long(f[top]) - 1, -diff);
      if (take <= 0) throw NumericError("cdf quantization cannot balance frequencies");
      f[top] -= std::uint32_t(take);
      diff += take;
    }
  }
  return f;
}

CdfTable from_freqs(int min_value, int max_value, const std::vector<std::uint32_t>& f) {
  CdfTable t;
  t.min_value = min_value;
  t.max_value = max_value;
  t.cum.resize(f.size() + 1);
  t.cum[0] = 0;
  for (std::size_t i = 0; i < f.size(); ++i) t.cum[i + 1] = t.cum[i] + f[i];
  return t;
}

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)); }
double logistic_cdf(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

CdfTable CdfTable::gaussian(double mu, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("cdf gaussian: sigma must be positive");
  int center = int(std::floor(mu));
  int half = std::min<long>(kMaxHalfWindow, std::lround(std::ceil(4.5 * sigma)) + 2);
  int lo = center - half, hi = center + half;
  std::vector<double> p(std::size_t(hi - lo + 1) + 1);
  double covered = 0;
  for (int v = lo; v <= hi; ++v) {
    double m = normal_cdf((v + 0.5 - mu) / sigma) - normal_cdf((v - 0.5 - mu) / sigma);
    p[std::size_t(v - lo)] = m;
    covered += m;
  }
  p.back() = std::max(0.0, 1.0 - covered);  // escape
  return from_freqs(lo, hi, quantize_freqs(p));
}

CdfTable CdfTable::logistic(double loc, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("cdf logistic: scale must be positive");
  int center = int(std::floor(loc));
  int half = std::min<long>(kMaxHalfWindow, std::lround(std::ceil(12.0 * scale)) + 2);
  int lo = center - half, hi = center + half;
  std::vector<double> p(std::size_t(hi - lo + 1) + 1);
  double covered = 0;
  for (int v = lo; v <= hi; ++v) {
    double m = logistic_cdf((v + 0.5 - loc) / scale) - logistic_cdf((v - 0.5 - loc) / scale);
    p[std::size_t(v - lo)] = m;
    covered += m;
  }
  p.back() = std::max(0.0, 1.0 - covered);
  return from_freqs(lo, hi, quantize_freqs(p));
}

CdfTable CdfTable::uniform(int min_value, int max_value) {
  if (max_value < min_value) throw std::invalid_argument("cdf uniform: empty range");
  std::size_t n = std::size_t(max_value - min_value + 1) + 1;
  if (n > kTotal / 2) throw std::invalid_argument("cdf uniform: range too wide");
  std::vector<double> p(n, 1.0 / double(n));
  return from_freqs(min_value, max_value, quantize_freqs(p));
}

void RangeEncoder::shift_low() {
  if (std::uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    std::uint8_t carry = std::uint8_t(low_ >> 32);
    std::uint8_t byte = cache_;
    do {
      out_.push_back(std::uint8_t(byte + carry));
      byte = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = std::uint8_t(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFull) << 8;
}

void RangeEncoder::encode_span(std::uint32_t cum_lo, std::uint32_t freq,
                               std::uint32_t total_bits) {
  range_ >>= total_bits;
  low_ += std::uint64_t(cum_lo) * range_;
  range_ *= freq;
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::encode(const CdfTable& table, int value) {
  if (finished_) throw std::logic_error("range encoder already finished");
  int idx = table.index_of(value);
  encode_span(table.cum[idx], table.freq(idx), 16);
  if (idx == table.escape_index()) {
    if (value < -32768 || value > 32767)
      throw NumericError("symbol out of escapable range: " + std::to_string(value));
    encode_span(std::uint32_t(value + 32768), 1, 16);
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw std::logic_error("range encoder already finished");
  finished_ = true;
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {
  if (next_byte() != 0) throw FormatError("range stream does not start with a zero byte");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size())
    throw FormatError("range stream truncated at byte " + std::to_string(pos_));
  return bytes_[pos_++];
}

std::uint32_t RangeDecoder::decode_span(std::uint32_t total_bits) {
  range_ >>= total_bits;
  std::uint32_t f = code_ / range_;
  std::uint32_t max = (1u << total_bits) - 1;
  return f > max ? max : f;
}

void RangeDecoder::commit_span(std::uint32_t cum_lo, std::uint32_t freq,
                               std::uint32_t) {
  code_ -= cum_lo * range_;
  range_ *= freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

int RangeDecoder::decode(const CdfTable& table) {
  std::uint32_t f = decode_span(16);
  auto it = std::upper_bound(table.cum.begin(), table.cum.end(), f);
  int idx = int(it - table.cum.begin()) - 1;
  commit_span(table.cum[idx], table.freq(idx), 16);
  if (idx != table.escape_index()) return table.min_value + idx;
  std::uint32_t raw = decode_span(16);
  commit_span(raw, 1, 16);
  return int(raw) - 32768;
}

}  // namespace mpa
