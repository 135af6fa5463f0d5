#pragma once

#include <cstdint>
#include <vector>

namespace mpa {

// 16-bit frequency table over a contiguous symbol range [min_value,
// max_value], plus one escape slot for out-of-range values. Frequencies are
// all >= 1 and sum to exactly 2^16.
struct CdfTable {
  static constexpr std::uint32_t kTotal = 1u << 16;

  int min_value = 0;
  int max_value = -1;
  std::vector<std::uint32_t> cum;  // size symbols+2; cum.front()=0, cum.back()=kTotal

  int symbols() const { return int(cum.size()) - 2; }  // excluding escape
  int escape_index() const { return symbols(); }
  std::uint32_t freq(int index) const { return cum[index + 1] - cum[index]; }

  // index for an in-range value, or the escape index
  int index_of(int value) const {
    if (value < min_value || value > max_value) return escape_index();
    return value - min_value;
  }

  // Gaussian bins of unit width centred on integers, mean mu, stddev sigma.
  static CdfTable gaussian(double mu, double sigma);
  // Logistic bins, location loc, scale s.
  static CdfTable logistic(double loc, double scale);
  // Uniform over [min_value, max_value] (no meaningful escape mass).
  static CdfTable uniform(int min_value, int max_value);
};

// Carry-propagating byte-wise range coder; 32-bit range, 64-bit low. The
// first output byte is always zero (initial cache) and the tail is padded so
// the decoder can always read ahead.
class RangeEncoder {
 public:
  // Encode a value under the table; out-of-range values cost the escape
  // symbol plus 16 raw bits and must fit in [-32768, 32767].
  void encode(const CdfTable& table, int value);
  std::vector<std::uint8_t> finish();

 private:
  void encode_span(std::uint32_t cum_lo, std::uint32_t freq, std::uint32_t total_bits);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const std::vector<std::uint8_t>& bytes);
  int decode(const CdfTable& table);
  std::size_t consumed() const { return pos_; }

 private:
  std::uint32_t decode_span(std::uint32_t total_bits);
  void commit_span(std::uint32_t cum_lo, std::uint32_t freq, std::uint32_t total_bits);
  std::uint8_t next_byte();

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

}  // namespace mpa
