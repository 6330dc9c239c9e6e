#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nwf/image.hpp"
#include "nwf/model.hpp"

namespace nwf {

enum class Colorspace : uint8_t { RGB = 0, YCbCr = 1 };

// Bit-exact container metadata. plane_bounds are in decode order: the final
// block first, then levels deepest to finest, three planes each. Bounds are
// 1-byte grid codes rounded outward; the decoded values define the coder
// alphabets on both sides.
struct ContainerHeader {
  uint16_t version = 1;
  uint16_t width = 0;
  uint16_t height = 0;
  uint8_t channels = 0;
  Colorspace colorspace = Colorspace::RGB;
  uint8_t scheme = 2;
  uint8_t iterations = 0;
  uint64_t model_hash = 0;
  uint32_t payload_len = 0;
  std::vector<std::pair<long, long>> plane_bounds;

  std::vector<uint8_t> serialize() const;
  static ContainerHeader parse(std::span<const uint8_t> bytes, size_t* header_len);
};

// Support-bound grid (1-byte signed codes, magnitudes up to 8191).
long bound_grid_value(uint8_t code);
uint8_t encode_bound_lo(long v);  // rounds toward -inf on the grid
uint8_t encode_bound_hi(long v);  // rounds toward +inf on the grid

struct CompressOptions {
  bool ycbcr = false;
};

std::vector<uint8_t> compress(const ImageU8& image, const Model& model,
                              CompressOptions opt = {});
ImageU8 decompress(std::span<const uint8_t> bytes, const Model& model);

// Ideal code length under the coder's view of the model (quantized
// parameters, support folded at the container bounds), bits per dimension.
double bpd_theoretical(const ImageU8& image, const Model& model, CompressOptions opt = {});
// 8 * compressed byte count / dimensions.
double bpd_actual(const ImageU8& image, const Model& model, CompressOptions opt = {});

// Decode only the final block plus `levels` refinement levels from the
// stream prefix; returns the low-pass image at that scale, clamped to u8.
ImageU8 progressive_decode(std::span<const uint8_t> bytes, const Model& model, int levels);
// Bytes of the stream actually consumed for the given level count.
size_t progressive_prefix_bytes(std::span<const uint8_t> bytes, const Model& model, int levels);

// Treat the input as a low-pass plane and invert `log2(factor)` iterations,
// drawing the high-pass planes from the priors. Deterministic per seed.
ImageU8 upsample(const ImageU8& image, const Model& model, int factor, uint64_t seed);

// tensor <-> image bridges
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image_clamped(const Tensor& t);

}  // namespace nwf
