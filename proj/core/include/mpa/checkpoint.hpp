#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/param_store.hpp"
#include "mpa/sha256.hpp"

// Checkpoint container: "MPAW", version byte, parameter count, then per
// parameter a length-prefixed name, rank, extents and raw float32 data.
// Everything is little-endian; values are stored as float32 regardless of
// the in-memory scalar type.

namespace mpa {

struct RawParam {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

std::vector<std::uint8_t> serialize_params(const std::vector<RawParam>& params);
std::vector<RawParam> parse_params(const std::vector<std::uint8_t>& bytes);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

// Names stored in a checkpoint, in file order, without loading the data.
std::vector<std::string> checkpoint_param_names(const std::string& path);

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::string& path) {
  std::vector<RawParam> raw;
  raw.reserve(store.all().size());
  for (const auto& p : store.all()) {
    RawParam r;
    r.name = p.name;
    r.shape = p.tensor->shape;
    r.data.assign(p.tensor->value.begin(), p.tensor->value.end());
    raw.push_back(std::move(r));
  }
  write_file(path, serialize_params(raw));
}

// Overwrites matching parameters in the store. Every parameter in the file
// must exist in the store with the same shape; store parameters missing from
// the file keep their current values (used when a later stage adds new
// modules on top of an earlier checkpoint).
template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::string& path) {
  auto raw = parse_params(read_file(path));
  for (const auto& r : raw) {
    if (!store.has(r.name))
      throw FormatError("checkpoint parameter not in model: " + r.name);
    auto& p = store.at(r.name);
    if (p.tensor->shape != r.shape)
      throw FormatError("checkpoint shape mismatch for " + r.name + ": file " +
                        shape_str(r.shape) + " vs model " + shape_str(p.tensor->shape));
    for (std::size_t i = 0; i < r.data.size(); ++i) p.tensor->value[i] = T(r.data[i]);
  }
}

// SHA-256 over the float32 bytes of parameters with the given name prefix,
// in registration order. Used to verify frozen modules stay untouched.
template <typename T>
std::string hash_params(const ParameterStore<T>& store, const std::string& prefix = "") {
  Sha256 h;
  for (const auto& p : store.all()) {
    if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
    h.update(p.name.data(), p.name.size());
    for (T v : p.tensor->value) {
      float f = float(v);
      h.update(&f, sizeof(f));
    }
  }
  return h.hex_digest();
}

}  // namespace mpa
