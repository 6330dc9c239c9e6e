#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nwf/error.hpp"

namespace nwf {

constexpr int kRansPrecisionBits = 14;            // m = 16384
constexpr uint64_t kRansLowerBound = 1ull << 32;  // steady state x in [2^32, 2^40)

// Quantized symbol frequencies over the alphabet [lo, lo+freq.size()-1].
// sum(freq) == 1 << precision_bits, every freq >= 1, cum strictly increasing.
struct FrequencyTable {
  int precision_bits = kRansPrecisionBits;
  long lo = 0;
  std::vector<uint32_t> freq;  // l_s
  std::vector<uint32_t> cum;   // b_s, size freq.size()+1, cum[0] == 0

  uint32_t total() const { return 1u << precision_bits; }
  size_t size() const { return freq.size(); }
  // index of the symbol whose [cum, cum+freq) slice contains slot
  size_t find(uint32_t slot) const;
  void validate() const;
};

// Largest-remainder quantization of a pmf with a floor of 1 per symbol.
// Deterministic: ties break toward the lower index.
FrequencyTable build_table(std::span<const double> pmf, long lo,
                           int precision_bits = kRansPrecisionBits);

// Single unrenormalized coding steps (the core maps).
uint64_t rans_encode_step(uint64_t x, size_t sym_index, const FrequencyTable& t);
std::pair<size_t, uint64_t> rans_decode_step(uint64_t x, const FrequencyTable& t);

// Streaming encoder. LIFO: feed symbols in reverse of the intended decode
// order. finish() flushes the final state as 8 bytes and returns the stream
// the decoder reads front to back.
class RansEncoder {
 public:
  RansEncoder() : x_(kRansLowerBound) {}
  void put(size_t sym_index, const FrequencyTable& t);
  std::vector<uint8_t> finish();

 private:
  uint64_t x_;
  std::vector<uint8_t> reversed_;
};

class RansDecoder {
 public:
  explicit RansDecoder(std::span<const uint8_t> bytes);
  size_t get(const FrequencyTable& t);
  size_t consumed() const { return pos_; }
  uint64_t state() const { return x_; }

 private:
  void refill();
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint64_t x_ = 0;
};

// Convenience for whole known-table streams (symbols given in decode order).
struct StreamSymbol {
  long value;
  const FrequencyTable* table;
};
std::vector<uint8_t> encode_stream(std::span<const StreamSymbol> symbols);

}  // namespace nwf
