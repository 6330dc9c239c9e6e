#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "nwf/error.hpp"

namespace nwf {

// Little-endian byte stream helpers shared by the model and container formats.
struct ByteWriter {
  std::vector<uint8_t> bytes;

  void u8(uint8_t v) { bytes.push_back(v); }
  void u16(uint16_t v) {
    bytes.push_back(v & 0xff);
    bytes.push_back(v >> 8);
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void tag(const char t[5]) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(t[i]));
  }
  void raw(std::span<const uint8_t> data) { bytes.insert(bytes.end(), data.begin(), data.end()); }
};

struct ByteReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    require(bytes.size() - pos >= n, Errc::format, std::string("truncated: ") + what);
  }
  uint8_t u8() {
    need(1, "u8");
    return bytes[pos++];
  }
  uint16_t u16() {
    need(2, "u16");
    uint16_t v = bytes[pos] | (bytes[pos + 1] << 8);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8, "u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void expect_tag(const char t[5]) {
    need(4, "tag");
    for (int i = 0; i < 4; ++i)
      require(bytes[pos + i] == static_cast<uint8_t>(t[i]), Errc::format,
              std::string("bad section tag, wanted ") + t);
    pos += 4;
  }
};

inline uint64_t fnv1a64(std::span<const uint8_t> data) {
  uint64_t h = 1469598103934665603ull;
  for (uint8_t b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace nwf
