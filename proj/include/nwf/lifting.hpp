#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nwf/conv.hpp"
#include "nwf/tensor.hpp"

namespace nwf {

enum class Scheme : uint8_t {
  OneD = 1,  // learnable 1D wavelet applied to rows then columns
  TwoD = 2,  // quadrant partition, direct 2D coupling
};

// Nearest-integer with halves toward +inf; the single rounding convention
// used everywhere (lifting, color conversion, sampling).
inline long round_nearest(double x) {
  require(std::abs(x) < (1L << 30), Errc::numeric, "round_nearest: out of range");
  return static_cast<long>(std::floor(x + 0.5));
}

// The shared coupling block: the same object is applied at every pyramid
// iteration. Scheme 2 holds `repeat` nets mapping 3c->c channels; scheme 1
// holds 2*repeat nets mapping c->c, alternating predict (odd stream -=
// net(even)) and update (even += net(odd)).
struct CouplingBlock {
  Scheme scheme = Scheme::TwoD;
  int channels = 3;
  std::vector<ConvNet> nets;

  int repeat() const {
    return scheme == Scheme::TwoD ? static_cast<int>(nets.size())
                                  : static_cast<int>(nets.size()) / 2;
  }
  std::vector<Tensor> parameters() const;
};

struct WaveletFlow {
  CouplingBlock block;
  bool integer_mode = true;  // false: continuous relaxation, no rounding
};

// Factor-out results, finest level first. Scheme 2: planes are the B, C, D
// quadrants; scheme 1: the row-high/col-high combinations in the same
// quadrant positions.
struct LatentPyramid {
  struct Level {
    std::array<Tensor, 3> planes;  // B, C, D
    Tensor low;  // the kept low-pass after this iteration (conditions the priors)
  };
  std::vector<Level> levels;
  Tensor final_block;  // the deepest low-pass block (min extent 2)
  int width = 0, height = 0, channels = 0;

  size_t coefficient_count() const;
};

// Geometry: iterations performed until an extent reaches 2.
int num_iterations(int width, int height);
bool is_power_of_two(int v);

// Quadrant partition over non-overlapping 2x2 cells: A upper-left,
// B upper-right, C lower-left, D lower-right.
std::array<Tensor, 4> split_quadrants(const Tensor& x);
Tensor merge_quadrants(const Tensor& a, const Tensor& b, const Tensor& c, const Tensor& d);

// Even/odd partition along the last axis.
std::pair<Tensor, Tensor> split_even_odd(const Tensor& x);
Tensor merge_even_odd(const Tensor& even, const Tensor& odd);

// One full sweep list over the quadrants, in-place view: A += t[n]([B,C,D]);
// B += t[n]([A,C,D]); C += t[n]([A,B,D]); D += t[n]([A,B,C]) for each net.
// integer mode rounds each net output before adding and checks the i16 range.
void coupling_forward_2d(std::array<Tensor, 4>& planes, const CouplingBlock& block, bool integer);
void coupling_inverse_2d(std::array<Tensor, 4>& planes, const CouplingBlock& block, bool integer);

// Alternating predict/update lifting steps on the even/odd streams.
void coupling_forward_1d(Tensor& even, Tensor& odd, const CouplingBlock& block, bool integer);
void coupling_inverse_1d(Tensor& even, Tensor& odd, const CouplingBlock& block, bool integer);

// Full factor-out transform; input [C,H,W] with power-of-two extents >= 2.
LatentPyramid wavelet_forward(const Tensor& image, const WaveletFlow& flow);
Tensor wavelet_inverse(const LatentPyramid& pyramid, const WaveletFlow& flow);

// Undo one iteration given the kept low-pass and the three factored planes.
Tensor invert_one_level(const Tensor& low, const std::array<Tensor, 3>& planes,
                        const CouplingBlock& block, bool integer);

// Appendix-layout block builders and the exact wavelet initializations.
ConvNet make_1d_net(int channels, PadMode first_pad);
ConvNet make_2d_net(int channels, int hidden_channel, int n_hidden);
ConvNet make_prior_net(int channels, int hidden_channel, int n_hidden);
CouplingBlock make_block(Scheme scheme, int channels, int repeat, int hidden_channel,
                         int n_hidden);

void init_haar(CouplingBlock& block);
void init_legall(CouplingBlock& block);

// Re-seeds hidden layers of all-zero nets (last layer stays zero) so the
// transform is unchanged but gradients flow.
void revive_dead_nets(CouplingBlock& block, uint64_t seed);
void randomize_net(ConvNet& net, uint64_t seed, bool zero_last);

}  // namespace nwf
