#pragma once

#include <cstdint>
#include <vector>

#include "nwf/tensor.hpp"

namespace nwf {

enum class PadMode : uint8_t {
  None = 0,
  ReplicateLeft = 1,   // kernel_size-1 values replicated on the left
  ReplicateRight = 2,  // kernel_size-1 values replicated on the right
  ReplicateBoth = 3,   // (kernel_size-1)/2 on each side, odd kernels only
};

struct ConvLayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  PadMode padding_mode = PadMode::None;
  int dims = 1;    // 1 -> weights [out,in,k]; 2 -> weights [out,in,k,k]
  Tensor weights;  // trainable
  Tensor bias;     // trainable, [out]

  size_t weight_count() const;
  void validate() const;
};

// Zero-initialized layer with trainable parameter tensors.
ConvLayerSpec make_conv1d(int in_channels, int out_channels, int kernel_size, PadMode pad);
ConvLayerSpec make_conv2d(int in_channels, int out_channels, int kernel_size, PadMode pad);

// Cross-correlation along the last axis of a [C,N] or [C,H,W] tensor
// (rows are a batch). Replicate padding reads clamped indices; summation
// order is fixed: output channel, position, input channel, tap.
Tensor conv1d(const Tensor& input, const ConvLayerSpec& spec);

// 2D cross-correlation over [C,H,W]; replicate-both or no padding.
Tensor conv2d(const Tensor& input, const ConvLayerSpec& spec);

// A conv stack with ReLU between layers. norm_input maps pixel-scale
// inputs through (v-128)/255; out_scale multiplies the final output.
struct ConvNet {
  std::vector<ConvLayerSpec> layers;
  bool norm_input = false;
  float out_scale = 1.0f;

  bool all_zero() const;
  std::vector<Tensor> parameters() const;
};

Tensor apply_net(const ConvNet& net, const Tensor& x);

}  // namespace nwf
