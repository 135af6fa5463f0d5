#include "mpa/container.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "mpa/error.hpp"

namespace mpa {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'A', '1'};
constexpr std::uint8_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > b.size())
      throw FormatError("container truncated at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return b[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(b[pos]) | (std::uint16_t(b[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::vector<std::uint8_t> blob(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(b.begin() + pos, b.begin() + pos + n);
    pos += n;
    return out;
  }
};

}  // namespace

double quantize_quality(double q, double q_max) {
  if (!(q >= 1.0 && q <= q_max))
    throw ConfigError("quality must lie in [1, " + std::to_string(q_max) + "]");
  return double(std::lround(q * 256.0)) / 256.0;
}

std::vector<std::uint8_t> write_container(const Container& c) {
  if (c.width == 0 || c.height == 0) throw FormatError("container: empty image dims");
  long qfix = std::lround(c.q * 256.0);
  if (qfix < 0 || qfix > 0xFFFF || double(qfix) != c.q * 256.0)
    throw FormatError("container: q is not on the 1/256 grid");
  std::vector<std::uint8_t> out;
  out.reserve(kContainerHeaderBytes + c.z_bytes.size() + c.y_bytes.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u16(out, std::uint16_t(qfix));
  put_u32(out, c.width);
  put_u32(out, c.height);
  put_u32(out, std::uint32_t(c.z_bytes.size()));
  out.insert(out.end(), c.z_bytes.begin(), c.z_bytes.end());
  put_u32(out, std::uint32_t(c.y_bytes.size()));
  out.insert(out.end(), c.y_bytes.begin(), c.y_bytes.end());
  return out;
}

Container parse_container(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a bitstream container: bad magic");
  r.pos = 4;
  std::uint8_t version = r.u8();
  if (version != kVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  Container c;
  c.q = double(r.u16()) / 256.0;
  c.width = r.u32();
  c.height = r.u32();
  if (c.width == 0 || c.height == 0) throw FormatError("container: empty image dims");
  c.z_bytes = r.blob(r.u32());
  c.y_bytes = r.blob(r.u32());
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after container payload");
  return c;
}

}  // namespace mpa
