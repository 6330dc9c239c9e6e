#include "nwf/conv.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace nwf {

size_t ConvLayerSpec::weight_count() const {
  size_t k = static_cast<size_t>(kernel_size);
  size_t per = dims == 1 ? k : k * k;
  return static_cast<size_t>(in_channels) * static_cast<size_t>(out_channels) * per;
}

void ConvLayerSpec::validate() const {
  require(in_channels > 0 && out_channels > 0, Errc::contract, "conv: channel counts positive");
  require(kernel_size > 0 && kernel_size % 2 == 1, Errc::contract, "conv: kernel size odd");
  require(dims == 1 || dims == 2, Errc::contract, "conv: dims is 1 or 2");
  require(weights.defined() && weights.numel() == weight_count(), Errc::contract,
          "conv: weight shape inconsistent with channel/kernel fields");
  require(bias.defined() && bias.numel() == static_cast<size_t>(out_channels), Errc::contract,
          "conv: bias shape");
  if (dims == 2)
    require(padding_mode == PadMode::ReplicateBoth || padding_mode == PadMode::None,
            Errc::contract, "conv2d: replicate-both or none");
}

ConvLayerSpec make_conv1d(int in_channels, int out_channels, int kernel_size, PadMode pad) {
  ConvLayerSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_size = kernel_size;
  s.padding_mode = pad;
  s.dims = 1;
  s.weights = Tensor::param({out_channels, in_channels, kernel_size},
                            std::vector<float>(s.weight_count(), 0.0f));
  s.bias = Tensor::param({out_channels}, std::vector<float>(out_channels, 0.0f));
  return s;
}

ConvLayerSpec make_conv2d(int in_channels, int out_channels, int kernel_size, PadMode pad) {
  ConvLayerSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_size = kernel_size;
  s.padding_mode = pad;
  s.dims = 2;
  s.weights = Tensor::param({out_channels, in_channels, kernel_size, kernel_size},
                            std::vector<float>(s.weight_count(), 0.0f));
  s.bias = Tensor::param({out_channels}, std::vector<float>(out_channels, 0.0f));
  return s;
}

namespace {

void pad_amounts(const ConvLayerSpec& s, int* left, int* right) {
  *left = 0;
  *right = 0;
  switch (s.padding_mode) {
    case PadMode::None: break;
    case PadMode::ReplicateLeft: *left = s.kernel_size - 1; break;
    case PadMode::ReplicateRight: *right = s.kernel_size - 1; break;
    case PadMode::ReplicateBoth:
      *left = (s.kernel_size - 1) / 2;
      *right = (s.kernel_size - 1) / 2;
      break;
  }
}

inline int clampi(int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); }

}  // namespace

Tensor conv1d(const Tensor& input, const ConvLayerSpec& spec) {
  spec.validate();
  require(spec.dims == 1, Errc::contract, "conv1d: spec built for 2D");
  require(input.rank() == 2 || input.rank() == 3, Errc::contract, "conv1d: expects [C,N] or [C,H,W]");
  const int cin = input.dim(0);
  require(cin == spec.in_channels, Errc::contract, "conv1d: input channel mismatch");
  const int batch = input.rank() == 3 ? input.dim(1) : 1;
  const int n = input.dim(input.rank() - 1);
  const int cout = spec.out_channels;
  const int k = spec.kernel_size;
  int pl, pr;
  pad_amounts(spec, &pl, &pr);
  const int nout = n + pl + pr - k + 1;
  require(nout > 0, Errc::contract, "conv1d: output length not positive");

  std::vector<float> out(static_cast<size_t>(cout) * batch * nout);
  const auto& x = input.values();
  const auto& w = spec.weights.values();
  const auto& b = spec.bias.values();
  for (int oc = 0; oc < cout; ++oc)
    for (int bt = 0; bt < batch; ++bt)
      for (int p = 0; p < nout; ++p) {
        float acc = b[oc];
        for (int ic = 0; ic < cin; ++ic) {
          const float* wr = &w[(static_cast<size_t>(oc) * cin + ic) * k];
          const float* xr = &x[(static_cast<size_t>(ic) * batch + bt) * n];
          for (int t = 0; t < k; ++t) acc += wr[t] * xr[clampi(p + t - pl, n - 1)];
        }
        out[(static_cast<size_t>(oc) * batch + bt) * nout + p] = acc;
      }

  std::vector<int> oshape = input.rank() == 3 ? std::vector<int>{cout, batch, nout}
                                              : std::vector<int>{cout, nout};
  return make_node(
      std::move(oshape), std::move(out), {input, spec.weights, spec.bias},
      [cin, cout, batch, n, nout, k, pl](detail::TensorImpl& self) {
        auto* xi = self.parents[0].impl();
        auto* wi = self.parents[1].impl();
        auto* bi = self.parents[2].impl();
        if (xi->requires_grad && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0f);
        if (wi->requires_grad && wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0f);
        if (bi->requires_grad && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0f);
        for (int oc = 0; oc < cout; ++oc)
          for (int bt = 0; bt < batch; ++bt)
            for (int p = 0; p < nout; ++p) {
              float g = self.grad[(static_cast<size_t>(oc) * batch + bt) * nout + p];
              if (g == 0.0f) continue;
              if (bi->requires_grad) bi->grad[oc] += g;
              for (int ic = 0; ic < cin; ++ic) {
                size_t wbase = (static_cast<size_t>(oc) * cin + ic) * k;
                size_t xbase = (static_cast<size_t>(ic) * batch + bt) * n;
                for (int t = 0; t < k; ++t) {
                  int src = clampi(p + t - pl, n - 1);
                  if (wi->requires_grad) wi->grad[wbase + t] += g * xi->value[xbase + src];
                  if (xi->requires_grad) xi->grad[xbase + src] += g * wi->value[wbase + t];
                }
              }
            }
      });
}

Tensor conv2d(const Tensor& input, const ConvLayerSpec& spec) {
  spec.validate();
  require(spec.dims == 2, Errc::contract, "conv2d: spec built for 1D");
  require(input.rank() == 3, Errc::contract, "conv2d: expects [C,H,W]");
  const int cin = input.dim(0);
  require(cin == spec.in_channels, Errc::contract, "conv2d: input channel mismatch");
  const int h = input.dim(1), w = input.dim(2);
  const int cout = spec.out_channels;
  const int k = spec.kernel_size;
  const int pad = spec.padding_mode == PadMode::ReplicateBoth ? (k - 1) / 2 : 0;
  const int hout = h + 2 * pad - k + 1;
  const int wout = w + 2 * pad - k + 1;
  require(hout > 0 && wout > 0, Errc::contract, "conv2d: output extent not positive");

  std::vector<float> out(static_cast<size_t>(cout) * hout * wout);
  const auto& x = input.values();
  const auto& wv = spec.weights.values();
  const auto& bv = spec.bias.values();
  for (int oc = 0; oc < cout; ++oc)
    for (int oy = 0; oy < hout; ++oy)
      for (int ox = 0; ox < wout; ++ox) {
        float acc = bv[oc];
        for (int ic = 0; ic < cin; ++ic) {
          const float* wbase = &wv[((static_cast<size_t>(oc) * cin + ic) * k) * k];
          const float* xbase = &x[static_cast<size_t>(ic) * h * w];
          for (int ky = 0; ky < k; ++ky) {
            int sy = clampi(oy + ky - pad, h - 1);
            for (int kx = 0; kx < k; ++kx)
              acc += wbase[ky * k + kx] * xbase[sy * w + clampi(ox + kx - pad, w - 1)];
          }
        }
        out[(static_cast<size_t>(oc) * hout + oy) * wout + ox] = acc;
      }

  return make_node(
      {cout, hout, wout}, std::move(out), {input, spec.weights, spec.bias},
      [cin, cout, h, w, hout, wout, k, pad](detail::TensorImpl& self) {
        auto* xi = self.parents[0].impl();
        auto* wi = self.parents[1].impl();
        auto* bi = self.parents[2].impl();
        if (xi->requires_grad && xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0f);
        if (wi->requires_grad && wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0f);
        if (bi->requires_grad && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0f);
        for (int oc = 0; oc < cout; ++oc)
          for (int oy = 0; oy < hout; ++oy)
            for (int ox = 0; ox < wout; ++ox) {
              float g = self.grad[(static_cast<size_t>(oc) * hout + oy) * wout + ox];
              if (g == 0.0f) continue;
              if (bi->requires_grad) bi->grad[oc] += g;
              for (int ic = 0; ic < cin; ++ic) {
                size_t wb = ((static_cast<size_t>(oc) * cin + ic) * k) * k;
                size_t xb = static_cast<size_t>(ic) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                  int sy = clampi(oy + ky - pad, h - 1);
                  for (int kx = 0; kx < k; ++kx) {
                    int sx = clampi(ox + kx - pad, w - 1);
                    if (wi->requires_grad) wi->grad[wb + ky * k + kx] += g * xi->value[xb + sy * w + sx];
                    if (xi->requires_grad) xi->grad[xb + sy * w + sx] += g * wi->value[wb + ky * k + kx];
                  }
                }
              }
            }
      });
}

bool ConvNet::all_zero() const {
  for (const auto& l : layers) {
    for (float v : l.weights.values())
      if (v != 0.0f) return false;
    for (float v : l.bias.values())
      if (v != 0.0f) return false;
  }
  return true;
}

std::vector<Tensor> ConvNet::parameters() const {
  std::vector<Tensor> ps;
  for (const auto& l : layers) {
    ps.push_back(l.weights);
    ps.push_back(l.bias);
  }
  return ps;
}

Tensor apply_net(const ConvNet& net, const Tensor& x) {
  require(!net.layers.empty(), Errc::contract, "apply_net: empty net");
  Tensor h = x;
  if (net.norm_input) h = scale(add_scalar(h, -128.0f), 1.0f / 255.0f);
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const ConvLayerSpec& l = net.layers[i];
    h = l.dims == 1 ? conv1d(h, l) : conv2d(h, l);
    if (i + 1 < net.layers.size()) h = relu(h);
  }
  if (net.out_scale != 1.0f) h = scale(h, net.out_scale);
  return h;
}

}  // namespace nwf
