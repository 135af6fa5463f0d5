#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpa {

// Minimal incremental SHA-256, used to fingerprint parameter bytes.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t len);
  std::string hex_digest();  // finalizes; further updates are invalid

 private:
  void process_block(const std::uint8_t* p);
  std::uint32_t h_[8];
  std::uint8_t buf_[64];
  std::size_t buf_len_ = 0;
  std::uint64_t total_ = 0;
};

std::string sha256_hex(const void* data, std::size_t len);

}  // namespace mpa
