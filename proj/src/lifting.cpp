#include "nwf/lifting.hpp"

#include <cmath>
#include <random>

namespace nwf {

std::vector<Tensor> CouplingBlock::parameters() const {
  std::vector<Tensor> ps;
  for (const auto& n : nets)
    for (const auto& p : n.parameters()) ps.push_back(p);
  return ps;
}

size_t LatentPyramid::coefficient_count() const {
  size_t n = final_block.defined() ? final_block.numel() : 0;
  for (const auto& lv : levels)
    for (const auto& p : lv.planes) n += p.numel();
  return n;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int num_iterations(int width, int height) {
  int n = 0;
  while (width > 2 && height > 2) {
    width /= 2;
    height /= 2;
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// partitions

std::array<Tensor, 4> split_quadrants(const Tensor& x) {
  require(x.rank() == 3, Errc::contract, "split_quadrants: expects [C,H,W]");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h % 2 == 0 && w % 2 == 0, Errc::contract, "split_quadrants: extents must be even");
  int hh = h / 2, hw = w / 2;
  std::array<Tensor, 4> out;
  for (int q = 0; q < 4; ++q) {
    int ro = q / 2, co = q % 2;  // A=(0,0) B=(0,1) C=(1,0) D=(1,1)
    std::vector<int> idx(static_cast<size_t>(c) * hh * hw);
    size_t k = 0;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < hh; ++y)
        for (int xx = 0; xx < hw; ++xx)
          idx[k++] = (ch * h + 2 * y + ro) * w + 2 * xx + co;
    out[q] = map_gather(x, {c, hh, hw}, std::move(idx));
  }
  return out;
}

Tensor merge_quadrants(const Tensor& a, const Tensor& b, const Tensor& c, const Tensor& d) {
  require(a.rank() == 3, Errc::contract, "merge_quadrants: expects [C,H,W]");
  const std::array<const Tensor*, 4> qs = {&a, &b, &c, &d};
  for (const auto* q : qs)
    require(q->shape() == a.shape(), Errc::contract, "merge_quadrants: shape mismatch");
  int ch = a.dim(0), hh = a.dim(1), hw = a.dim(2);
  int h = hh * 2, w = hw * 2;
  // gather from the concat of the four quadrants
  Tensor cat = concat_channels({a, b, c, d});  // [4c, hh, hw]
  std::vector<int> idx(static_cast<size_t>(ch) * h * w);
  size_t plane = static_cast<size_t>(hh) * hw;
  size_t k = 0;
  for (int cc = 0; cc < ch; ++cc)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int q = (y % 2) * 2 + (x % 2);
        idx[k++] = static_cast<int>((static_cast<size_t>(q) * ch + cc) * plane +
                                    static_cast<size_t>(y / 2) * hw + x / 2);
      }
  return map_gather(cat, {ch, h, w}, std::move(idx));
}

std::pair<Tensor, Tensor> split_even_odd(const Tensor& x) {
  int r = x.rank();
  require(r >= 2, Errc::contract, "split_even_odd: rank >= 2");
  int n = x.dim(r - 1);
  require(n % 2 == 0, Errc::contract, "split_even_odd: last extent must be even");
  size_t rows = x.numel() / static_cast<size_t>(n);
  std::vector<int> shape = x.shape();
  shape[r - 1] = n / 2;
  std::vector<int> even_idx(rows * (n / 2)), odd_idx(rows * (n / 2));
  size_t k = 0;
  for (size_t row = 0; row < rows; ++row)
    for (int i = 0; i < n / 2; ++i) {
      even_idx[k] = static_cast<int>(row * n + 2 * i);
      odd_idx[k] = static_cast<int>(row * n + 2 * i + 1);
      ++k;
    }
  return {map_gather(x, shape, std::move(even_idx)), map_gather(x, shape, std::move(odd_idx))};
}

Tensor merge_even_odd(const Tensor& even, const Tensor& odd) {
  require(even.shape() == odd.shape(), Errc::contract, "merge_even_odd: shape mismatch");
  int r = even.rank();
  int half = even.dim(r - 1);
  size_t rows = even.numel() / static_cast<size_t>(half);
  std::vector<int> shape = even.shape();
  shape[r - 1] = half * 2;
  // stack [even, odd] along axis 0 then gather
  Tensor cat = concat_channels({even, odd});
  size_t block = even.numel();
  std::vector<int> idx(block * 2);
  size_t k = 0;
  for (size_t row = 0; row < rows; ++row)
    for (int i = 0; i < half * 2; ++i) {
      size_t src = row * half + static_cast<size_t>(i / 2);
      idx[k++] = static_cast<int>((i % 2 == 0 ? 0 : block) + src);
    }
  return map_gather(cat, shape, std::move(idx));
}

// ---------------------------------------------------------------------------
// coupling

namespace {

void check_int16(const Tensor& t) {
  for (float v : t.values())
    require(std::fabs(v) <= 32767.0f, Errc::numeric,
            "lifting: coefficient overflows signed 16-bit");
}

Tensor net_update(const ConvNet& net, const Tensor& in, bool integer) {
  Tensor u = apply_net(net, in);
  if (integer) u = round_st(u);
  return u;
}

}  // namespace

void coupling_forward_2d(std::array<Tensor, 4>& p, const CouplingBlock& block, bool integer) {
  require(block.scheme == Scheme::TwoD, Errc::contract, "coupling_forward_2d: scheme mismatch");
  for (const auto& q : p)
    require(q.shape() == p[0].shape(), Errc::contract, "coupling_forward_2d: plane shape mismatch");
  for (const auto& net : block.nets) {
    p[0] = add(p[0], net_update(net, concat_channels({p[1], p[2], p[3]}), integer));
    if (integer) check_int16(p[0]);
    p[1] = add(p[1], net_update(net, concat_channels({p[0], p[2], p[3]}), integer));
    if (integer) check_int16(p[1]);
    p[2] = add(p[2], net_update(net, concat_channels({p[0], p[1], p[3]}), integer));
    if (integer) check_int16(p[2]);
    p[3] = add(p[3], net_update(net, concat_channels({p[0], p[1], p[2]}), integer));
    if (integer) check_int16(p[3]);
  }
}

void coupling_inverse_2d(std::array<Tensor, 4>& p, const CouplingBlock& block, bool integer) {
  require(block.scheme == Scheme::TwoD, Errc::contract, "coupling_inverse_2d: scheme mismatch");
  for (auto it = block.nets.rbegin(); it != block.nets.rend(); ++it) {
    p[3] = sub(p[3], net_update(*it, concat_channels({p[0], p[1], p[2]}), integer));
    p[2] = sub(p[2], net_update(*it, concat_channels({p[0], p[1], p[3]}), integer));
    p[1] = sub(p[1], net_update(*it, concat_channels({p[0], p[2], p[3]}), integer));
    p[0] = sub(p[0], net_update(*it, concat_channels({p[1], p[2], p[3]}), integer));
  }
}

void coupling_forward_1d(Tensor& even, Tensor& odd, const CouplingBlock& block, bool integer) {
  require(block.scheme == Scheme::OneD, Errc::contract, "coupling_forward_1d: scheme mismatch");
  require(block.nets.size() % 2 == 0, Errc::contract, "coupling_forward_1d: net count must be even");
  for (size_t k = 0; k < block.nets.size(); ++k) {
    if (k % 2 == 0) {
      odd = sub(odd, net_update(block.nets[k], even, integer));  // predict: d = e - P(o)
      if (integer) check_int16(odd);
    } else {
      even = add(even, net_update(block.nets[k], odd, integer));  // update: s = o + U(d)
      if (integer) check_int16(even);
    }
  }
}

void coupling_inverse_1d(Tensor& even, Tensor& odd, const CouplingBlock& block, bool integer) {
  require(block.scheme == Scheme::OneD, Errc::contract, "coupling_inverse_1d: scheme mismatch");
  for (size_t i = block.nets.size(); i-- > 0;) {
    if (i % 2 == 0) {
      odd = add(odd, net_update(block.nets[i], even, integer));
    } else {
      even = sub(even, net_update(block.nets[i], odd, integer));
    }
  }
}

// ---------------------------------------------------------------------------
// factor-out pyramid

namespace {

// One scheme-1 iteration applied in place: lift rows, then columns.
Tensor scheme1_iterate(const Tensor& x, const CouplingBlock& block, bool integer) {
  Tensor cur = x;
  for (int pass = 0; pass < 2; ++pass) {
    auto [even, odd] = split_even_odd(cur);
    coupling_forward_1d(even, odd, block, integer);
    cur = merge_even_odd(even, odd);
    cur = transpose_hw(cur);
  }
  return cur;  // two transposes, orientation restored
}

Tensor scheme1_iterate_inverse(const Tensor& y, const CouplingBlock& block, bool integer) {
  Tensor cur = y;
  for (int pass = 0; pass < 2; ++pass) {
    cur = transpose_hw(cur);
    auto [even, odd] = split_even_odd(cur);
    coupling_inverse_1d(even, odd, block, integer);
    cur = merge_even_odd(even, odd);
  }
  return cur;
}

}  // namespace

LatentPyramid wavelet_forward(const Tensor& image, const WaveletFlow& flow) {
  require(image.rank() == 3, Errc::contract, "wavelet_forward: expects [C,H,W]");
  int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  require(c == flow.block.channels, Errc::model, "wavelet_forward: channel count mismatch");
  require(is_power_of_two(h) && is_power_of_two(w), Errc::contract,
          "wavelet_forward: extents must be powers of two");
  require(h >= 2 && w >= 2, Errc::contract, "wavelet_forward: extents must be >= 2");

  LatentPyramid pyr;
  pyr.width = w;
  pyr.height = h;
  pyr.channels = c;

  Tensor cur = image;
  while (cur.dim(1) > 2 && cur.dim(2) > 2) {
    if (flow.block.scheme == Scheme::OneD)
      cur = scheme1_iterate(cur, flow.block, flow.integer_mode);
    auto quads = split_quadrants(cur);
    if (flow.block.scheme == Scheme::TwoD)
      coupling_forward_2d(quads, flow.block, flow.integer_mode);
    pyr.levels.push_back({{quads[1], quads[2], quads[3]}, quads[0]});
    cur = quads[0];
  }
  pyr.final_block = cur;
  return pyr;
}

Tensor invert_one_level(const Tensor& low, const std::array<Tensor, 3>& planes,
                        const CouplingBlock& block, bool integer) {
  for (const auto& p : planes)
    require(p.shape() == low.shape(), Errc::contract, "invert_one_level: geometry mismatch");
  if (block.scheme == Scheme::TwoD) {
    std::array<Tensor, 4> quads = {low, planes[0], planes[1], planes[2]};
    coupling_inverse_2d(quads, block, integer);
    return merge_quadrants(quads[0], quads[1], quads[2], quads[3]);
  }
  Tensor merged = merge_quadrants(low, planes[0], planes[1], planes[2]);
  return scheme1_iterate_inverse(merged, block, integer);
}

Tensor wavelet_inverse(const LatentPyramid& pyramid, const WaveletFlow& flow) {
  require(pyramid.final_block.defined(), Errc::contract, "wavelet_inverse: empty pyramid");
  Tensor cur = pyramid.final_block;
  for (size_t i = pyramid.levels.size(); i-- > 0;) {
    const auto& lv = pyramid.levels[i];
    cur = invert_one_level(cur, lv.planes, flow.block, flow.integer_mode);
  }
  require(cur.dim(1) == pyramid.height && cur.dim(2) == pyramid.width, Errc::contract,
          "wavelet_inverse: reconstructed geometry mismatch");
  return cur;
}

// ---------------------------------------------------------------------------
// builders and wavelet initializations

namespace {

int hidden_1d(int channels) { return std::max(4, 3 * channels + 1); }

void set_w(ConvLayerSpec& l, int oc, int ic, int tap, float v) {
  l.weights.values_mut()[(static_cast<size_t>(oc) * l.in_channels + ic) * l.kernel_size + tap] = v;
}

// Shared tail of the Appendix-layout 1D nets: pass-through of the first 2c
// hidden channels, then join as h_i - h_{c+i} at the center tap.
void init_1d_tail(ConvNet& net, int c) {
  ConvLayerSpec& l2 = net.layers[1];
  for (int j = 0; j < 2 * c; ++j) set_w(l2, j, j, 1, 1.0f);
  ConvLayerSpec& l3 = net.layers[2];
  for (int i = 0; i < c; ++i) {
    set_w(l3, i, i, 1, 1.0f);
    set_w(l3, i, c + i, 1, -1.0f);
  }
}

void zero_net(ConvNet& net) {
  for (auto& l : net.layers) {
    std::fill(l.weights.values_mut().begin(), l.weights.values_mut().end(), 0.0f);
    std::fill(l.bias.values_mut().begin(), l.bias.values_mut().end(), 0.0f);
  }
}

void require_1d_geometry(const CouplingBlock& block) {
  require(block.scheme == Scheme::OneD, Errc::contract, "wavelet init: needs a 1D block");
  require(block.nets.size() >= 2, Errc::contract, "wavelet init: needs predict and update nets");
  int c = block.channels;
  int h = hidden_1d(c);
  for (size_t k = 0; k < block.nets.size(); ++k) {
    const auto& net = block.nets[k];
    require(net.layers.size() == 3, Errc::contract, "wavelet init: 1D nets have 3 conv layers");
    require(net.layers[0].in_channels == c && net.layers[0].out_channels == h &&
                net.layers[0].kernel_size == 3,
            Errc::contract, "wavelet init: first conv geometry");
    require(net.layers[1].in_channels == h && net.layers[1].out_channels == h, Errc::contract,
            "wavelet init: second conv geometry");
    require(net.layers[2].in_channels == h && net.layers[2].out_channels == c, Errc::contract,
            "wavelet init: third conv geometry");
    PadMode want = k % 2 == 0 ? PadMode::ReplicateRight : PadMode::ReplicateLeft;
    require(net.layers[0].padding_mode == want, Errc::contract,
            "wavelet init: first conv padding side");
  }
}

}  // namespace

ConvNet make_1d_net(int channels, PadMode first_pad) {
  int h = hidden_1d(channels);
  ConvNet net;
  net.norm_input = false;
  net.out_scale = 1.0f;
  net.layers.push_back(make_conv1d(channels, h, 3, first_pad));
  net.layers.push_back(make_conv1d(h, h, 3, PadMode::ReplicateBoth));
  net.layers.push_back(make_conv1d(h, channels, 3, PadMode::ReplicateBoth));
  return net;
}

ConvNet make_2d_net(int channels, int hidden_channel, int n_hidden) {
  ConvNet net;
  net.norm_input = true;
  net.out_scale = 255.0f;
  net.layers.push_back(make_conv2d(3 * channels, hidden_channel, 3, PadMode::ReplicateBoth));
  for (int i = 0; i < n_hidden; ++i)
    net.layers.push_back(make_conv2d(hidden_channel, hidden_channel, 1, PadMode::None));
  net.layers.push_back(make_conv2d(hidden_channel, channels, 3, PadMode::ReplicateBoth));
  return net;
}

ConvNet make_prior_net(int channels, int hidden_channel, int n_hidden) {
  ConvNet net;
  net.norm_input = true;
  net.out_scale = 1.0f;
  net.layers.push_back(make_conv2d(channels, hidden_channel, 3, PadMode::ReplicateBoth));
  for (int i = 0; i < n_hidden; ++i)
    net.layers.push_back(make_conv2d(hidden_channel, hidden_channel, 1, PadMode::None));
  net.layers.push_back(make_conv2d(hidden_channel, 6 * channels, 3, PadMode::ReplicateBoth));
  return net;
}

CouplingBlock make_block(Scheme scheme, int channels, int repeat, int hidden_channel,
                         int n_hidden) {
  require(repeat >= 1, Errc::contract, "make_block: repeat >= 1");
  CouplingBlock b;
  b.scheme = scheme;
  b.channels = channels;
  if (scheme == Scheme::TwoD) {
    for (int i = 0; i < repeat; ++i)
      b.nets.push_back(make_2d_net(channels, hidden_channel, n_hidden));
  } else {
    for (int i = 0; i < repeat; ++i) {
      b.nets.push_back(make_1d_net(channels, PadMode::ReplicateRight));
      b.nets.push_back(make_1d_net(channels, PadMode::ReplicateLeft));
    }
  }
  return b;
}

void init_legall(CouplingBlock& block) {
  require_1d_geometry(block);
  int c = block.channels;
  for (auto& net : block.nets) zero_net(net);
  // predict net: (o_k + o_{k+1}) / 2, replicate right
  ConvNet& p = block.nets[0];
  for (int i = 0; i < c; ++i) {
    set_w(p.layers[0], i, i, 0, 0.5f);
    set_w(p.layers[0], i, i, 1, 0.5f);
    set_w(p.layers[0], c + i, i, 0, -0.5f);
    set_w(p.layers[0], c + i, i, 1, -0.5f);
  }
  init_1d_tail(p, c);
  // update net: (d_{k-1} + d_k) / 4, replicate left
  ConvNet& u = block.nets[1];
  for (int i = 0; i < c; ++i) {
    set_w(u.layers[0], i, i, 1, 0.25f);
    set_w(u.layers[0], i, i, 2, 0.25f);
    set_w(u.layers[0], c + i, i, 1, -0.25f);
    set_w(u.layers[0], c + i, i, 2, -0.25f);
  }
  init_1d_tail(u, c);
}

void init_haar(CouplingBlock& block) {
  require_1d_geometry(block);
  int c = block.channels;
  for (auto& net : block.nets) zero_net(net);
  // predict net: o_k
  ConvNet& p = block.nets[0];
  for (int i = 0; i < c; ++i) {
    set_w(p.layers[0], i, i, 0, 1.0f);
    set_w(p.layers[0], c + i, i, 0, -1.0f);
  }
  init_1d_tail(p, c);
  // update net: d_k / 2
  ConvNet& u = block.nets[1];
  for (int i = 0; i < c; ++i) {
    set_w(u.layers[0], i, i, 2, 0.5f);
    set_w(u.layers[0], c + i, i, 2, -0.5f);
  }
  init_1d_tail(u, c);
}

void randomize_net(ConvNet& net, uint64_t seed, bool zero_last) {
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < net.layers.size(); ++i) {
    auto& l = net.layers[i];
    if (zero_last && i + 1 == net.layers.size()) {
      std::fill(l.weights.values_mut().begin(), l.weights.values_mut().end(), 0.0f);
      std::fill(l.bias.values_mut().begin(), l.bias.values_mut().end(), 0.0f);
      continue;
    }
    int fan_in = l.in_channels * (l.dims == 1 ? l.kernel_size : l.kernel_size * l.kernel_size);
    float a = std::sqrt(1.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-a, a);
    for (auto& v : l.weights.values_mut()) v = dist(rng);
    std::fill(l.bias.values_mut().begin(), l.bias.values_mut().end(), 0.0f);
  }
}

void revive_dead_nets(CouplingBlock& block, uint64_t seed) {
  for (size_t i = 0; i < block.nets.size(); ++i)
    if (block.nets[i].all_zero()) randomize_net(block.nets[i], seed + i, /*zero_last=*/true);
}

}  // namespace nwf
