#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwf/error.hpp"

namespace nwf {

// Channel-major (planar) 8-bit image: data[c*w*h + y*w + x].
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c) : width(w), height(h), channels(c),
                                 data(static_cast<size_t>(w) * h * c, 0) {}

  uint8_t& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  uint8_t at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool valid() const {
    return (channels == 1 || channels == 3) &&
           data.size() == pixel_count() * static_cast<size_t>(channels);
  }
};

// JPEG-2000 style conversion; each output rounded to nearest and clamped.
ImageU8 rgb_to_ycbcr(const ImageU8& img);
// Not an exact inverse on uint8; round-trip error is at most 2 per channel.
ImageU8 ycbcr_to_rgb(const ImageU8& img);

// Binary P5 (1 channel) / P6 (3 channels), maxval 255 only.
ImageU8 read_ppm(const std::string& path);
void write_ppm(const ImageU8& img, const std::string& path);
ImageU8 parse_ppm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> serialize_ppm(const ImageU8& img);

// All size x size windows at the given stride, fully inside bounds,
// row-major scan order.
std::vector<ImageU8> extract_patches(const ImageU8& img, int size, int stride);

// Deterministic corpus batching: images under dir (sorted paths), cut into
// patches, shuffled per epoch by seed. Patches of different sizes are
// bucketed; a batch always has one size.
class CorpusIter {
 public:
  CorpusIter(const std::string& dir, int patch_size, int batch, uint64_t seed);
  CorpusIter(std::vector<ImageU8> patches, int batch, uint64_t seed);

  // Batches for one epoch; same (seed, epoch) always gives the same order.
  std::vector<std::vector<const ImageU8*>> epoch_batches(int epoch) const;
  size_t patch_count() const { return patches_.size(); }
  const std::vector<ImageU8>& patches() const { return patches_; }

 private:
  std::vector<ImageU8> patches_;
  int batch_;
  uint64_t seed_;
};

std::vector<std::string> list_images(const std::string& dir);

}  // namespace nwf
