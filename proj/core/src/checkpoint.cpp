#include "mpa/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mpa {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'A', 'W'};
constexpr std::uint8_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(bytes[pos]) | (std::uint16_t(bytes[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
    pos += n;
    return s;
  }
};

RawParam parse_one(Reader& r) {
  RawParam p;
  p.name = r.str(r.u16());
  if (p.name.empty()) throw FormatError("checkpoint entry with empty name");
  int rank = r.u8();
  std::size_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint32_t e = r.u32();
    if (e == 0) throw FormatError("checkpoint extent of 0 in " + p.name);
    p.shape.push_back(int(e));
    numel *= e;
  }
  if (rank == 0) p.shape = {1};
  p.data.resize(numel);
  for (auto& v : p.data) v = r.f32();
  return p;
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const std::vector<RawParam>& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u32(out, std::uint32_t(params.size()));
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw FormatError("parameter name too long: " + p.name);
    put_u16(out, std::uint16_t(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    out.push_back(std::uint8_t(p.shape.size()));
    std::size_t numel = 1;
    for (int e : p.shape) {
      put_u32(out, std::uint32_t(e));
      numel *= std::size_t(e);
    }
    if (numel != p.data.size()) throw FormatError("parameter data size mismatch: " + p.name);
    for (float f : p.data) put_f32(out, f);
  }
  return out;
}

std::vector<RawParam> parse_params(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a checkpoint: bad magic");
  r.pos = 4;
  if (r.u8() != kVersion) throw FormatError("unsupported checkpoint version");
  std::uint32_t count = r.u32();
  std::vector<RawParam> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(parse_one(r));
  if (r.pos != bytes.size())
    throw FormatError("trailing bytes after checkpoint payload");
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw FormatError("write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size), 0);
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw FormatError("read failed: " + path);
  return bytes;
}

std::vector<std::string> checkpoint_param_names(const std::string& path) {
  auto raw = parse_params(read_file(path));
  std::vector<std::string> names;
  names.reserve(raw.size());
  for (auto& p : raw) names.push_back(std::move(p.name));
  return names;
}

}  // namespace mpa
