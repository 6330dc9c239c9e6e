#include "nwf/rans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nwf {

size_t FrequencyTable::find(uint32_t slot) const {
  // largest s with cum[s] <= slot
  size_t lo_i = 0, hi_i = freq.size();
  while (hi_i - lo_i > 1) {
    size_t mid = (lo_i + hi_i) / 2;
    if (cum[mid] <= slot) lo_i = mid;
    else hi_i = mid;
  }
  return lo_i;
}

void FrequencyTable::validate() const {
  require(!freq.empty(), Errc::contract, "freq table: empty alphabet");
  require(cum.size() == freq.size() + 1 && cum[0] == 0, Errc::contract, "freq table: bad cum");
  uint32_t acc = 0;
  for (size_t i = 0; i < freq.size(); ++i) {
    require(freq[i] >= 1, Errc::contract, "freq table: zero frequency");
    acc += freq[i];
    require(cum[i + 1] == acc, Errc::contract, "freq table: cum mismatch");
  }
  require(acc == total(), Errc::contract, "freq table: frequencies do not sum to m");
}

FrequencyTable build_table(std::span<const double> pmf, long lo, int precision_bits) {
  const size_t n = pmf.size();
  const uint32_t m = 1u << precision_bits;
  require(n >= 1, Errc::contract, "build_table: empty pmf");
  require(n <= m, Errc::contract, "build_table: alphabet larger than table total");

  FrequencyTable t;
  t.precision_bits = precision_bits;
  t.lo = lo;
  t.freq.resize(n);

  std::vector<double> scaled(n);
  double total_mass = 0.0;
  for (size_t i = 0; i < n; ++i) {
    require(pmf[i] >= 0.0 && std::isfinite(pmf[i]), Errc::contract, "build_table: bad pmf value");
    total_mass += pmf[i];
  }
  require(total_mass > 0.0, Errc::contract, "build_table: zero pmf");
  long sum = 0;
  for (size_t i = 0; i < n; ++i) {
    scaled[i] = pmf[i] / total_mass * static_cast<double>(m);
    uint32_t f = static_cast<uint32_t>(std::floor(scaled[i]));
    if (f < 1) f = 1;
    t.freq[i] = f;
    sum += f;
  }

  long diff = static_cast<long>(m) - sum;
  if (diff > 0) {
    // hand out by largest remainder, lower index first on ties
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      double ra = scaled[a] - std::floor(scaled[a]);
      double rb = scaled[b] - std::floor(scaled[b]);
      return ra > rb;
    });
    size_t k = 0;
    while (diff > 0) {
      t.freq[order[k % n]] += 1;
      --diff;
      ++k;
    }
  } else if (diff < 0) {
    // take back from the largest frequencies, keeping the floor of 1
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return t.freq[a] > t.freq[b]; });
    for (size_t k = 0; k < n && diff < 0; ++k) {
      size_t i = order[k];
      long cut = std::min<long>(t.freq[i] - 1, -diff);
      t.freq[i] -= static_cast<uint32_t>(cut);
      diff += cut;
    }
    require(diff == 0, Errc::contract, "build_table: cannot satisfy floor");
  }

  t.cum.resize(n + 1);
  t.cum[0] = 0;
  for (size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + t.freq[i];
  t.validate();
  return t;
}

uint64_t rans_encode_step(uint64_t x, size_t sym_index, const FrequencyTable& t) {
  const uint64_t l = t.freq[sym_index];
  const uint64_t b = t.cum[sym_index];
  return ((x / l) << t.precision_bits) + b + (x % l);
}

std::pair<size_t, uint64_t> rans_decode_step(uint64_t x, const FrequencyTable& t) {
  const uint64_t m_mask = t.total() - 1;
  const uint32_t slot = static_cast<uint32_t>(x & m_mask);
  const size_t s = t.find(slot);
  uint64_t x2 = static_cast<uint64_t>(t.freq[s]) * (x >> t.precision_bits) + slot - t.cum[s];
  return {s, x2};
}

void RansEncoder::put(size_t sym_index, const FrequencyTable& t) {
  require(sym_index < t.size(), Errc::contract, "rans: symbol outside alphabet");
  const uint64_t l = t.freq[sym_index];
  const uint64_t x_max = ((kRansLowerBound >> t.precision_bits) << 8) * l;
  while (x_ >= x_max) {
    reversed_.push_back(static_cast<uint8_t>(x_ & 0xff));
    x_ >>= 8;
  }
  x_ = rans_encode_step(x_, sym_index, t);
}

std::vector<uint8_t> RansEncoder::finish() {
  for (int i = 0; i < 8; ++i) reversed_.push_back(static_cast<uint8_t>((x_ >> (8 * i)) & 0xff));
  std::vector<uint8_t> out(reversed_.rbegin(), reversed_.rend());
  x_ = kRansLowerBound;
  reversed_.clear();
  return out;
}

RansDecoder::RansDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  require(bytes_.size() >= 8, Errc::decode, "rans: stream shorter than flushed state");
  x_ = 0;
  for (int i = 0; i < 8; ++i) x_ = (x_ << 8) | bytes_[pos_++];
  require(x_ >= kRansLowerBound, Errc::decode, "rans: invalid initial state");
}

void RansDecoder::refill() {
  while (x_ < kRansLowerBound) {
    require(pos_ < bytes_.size(), Errc::decode, "rans: stream exhausted (corrupt or truncated)");
    x_ = (x_ << 8) | bytes_[pos_++];
  }
}

size_t RansDecoder::get(const FrequencyTable& t) {
  auto [s, x2] = rans_decode_step(x_, t);
  x_ = x2;
  refill();
  return s;
}

std::vector<uint8_t> encode_stream(std::span<const StreamSymbol> symbols) {
  RansEncoder enc;
  for (size_t i = symbols.size(); i-- > 0;) {
    const auto& s = symbols[i];
    long idx = s.value - s.table->lo;
    require(idx >= 0 && idx < static_cast<long>(s.table->size()), Errc::numeric,
            "rans: value outside declared support");
    enc.put(static_cast<size_t>(idx), *s.table);
  }
  return enc.finish();
}

}  // namespace nwf
