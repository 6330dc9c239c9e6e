#include "nwf/analysis.hpp"

#include <cmath>
#include <sstream>

#include "nwf/prior.hpp"

namespace nwf {

namespace {

// d output[channel, j] / d input[channel, :] for the in-place 1D transform
// of one row. The graph is rebuilt per output index; grads of a fresh leaf
// are exact.
std::vector<double> jacobian_row_1d(const CouplingBlock& block, const std::vector<float>& row_vals,
                                    int channels, int n, int channel, int j) {
  Tensor x = Tensor::param({channels, n}, row_vals);
  auto [even, odd] = split_even_odd(x);
  coupling_forward_1d(even, odd, block, /*integer=*/false);
  Tensor y = merge_even_odd(even, odd);
  Tensor yj = map_gather(y, {1}, {channel * n + j});
  backward(yj);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = x.grad()[channel * n + i];
  return out;
}

std::vector<double> jacobian_row_2d(const CouplingBlock& block, const std::vector<float>& img_vals,
                                    int channels, int h, int w, int channel, int r, int j) {
  Tensor x = Tensor::param({channels, h, w}, img_vals);
  auto quads = split_quadrants(x);
  coupling_forward_2d(quads, block, /*integer=*/false);
  Tensor y = merge_quadrants(quads[0], quads[1], quads[2], quads[3]);
  Tensor yj = map_gather(y, {1}, {(channel * h + r) * w + j});
  backward(yj);
  std::vector<double> out(w);
  for (int i = 0; i < w; ++i) out[i] = x.grad()[(channel * h + r) * w + i];
  return out;
}

}  // namespace

FilterBank extract_filters(const Model& model, const ImageU8& base, int row_index, int channel) {
  require(!model.flow.integer_mode, Errc::contract,
          "extract_filters: flow is in integer mode; disable rounding (continuous mode) first");
  require(base.channels == model.channels, Errc::model, "extract_filters: channel mismatch");
  require(channel >= 0 && channel < base.channels, Errc::contract, "extract_filters: bad channel");
  require(row_index >= 0 && row_index < base.height, Errc::contract,
          "extract_filters: row index out of range");
  require(base.width >= 4 && base.width % 2 == 0, Errc::contract,
          "extract_filters: width must be even and >= 4");

  FilterBank bank;
  bank.n = base.width;
  if (model.scheme() == Scheme::OneD) {
    std::vector<float> row_vals(static_cast<size_t>(base.channels) * base.width);
    for (int c = 0; c < base.channels; ++c)
      for (int x = 0; x < base.width; ++x)
        row_vals[c * base.width + x] = static_cast<float>(base.at(c, row_index, x));
    // interleaved output: even positions s (low), odd positions d (high)
    for (int j = 0; j < base.width; ++j)
      bank.rows.push_back(
          jacobian_row_1d(model.flow.block, row_vals, base.channels, base.width, channel, j));
  } else {
    std::vector<float> img_vals(base.data.size());
    for (size_t i = 0; i < img_vals.size(); ++i) img_vals[i] = static_cast<float>(base.data[i]);
    for (int j = 0; j < base.width; ++j)
      bank.rows.push_back(jacobian_row_2d(model.flow.block, img_vals, base.channels, base.height,
                                          base.width, channel, row_index, j));
  }
  return bank;
}

ResponseCurve freq_response(std::span<const double> h, int n_samples) {
  require(n_samples >= 2, Errc::contract, "freq_response: need at least two samples");
  ResponseCurve curve;
  curve.omega.resize(n_samples);
  curve.magnitude.resize(n_samples);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n_samples; ++i) {
    double w = pi * static_cast<double>(i) / static_cast<double>(n_samples - 1);
    double re = 0.0, im = 0.0;
    for (size_t n = 0; n < h.size(); ++n) {
      re += h[n] * std::cos(w * static_cast<double>(n));
      im -= h[n] * std::sin(w * static_cast<double>(n));
    }
    curve.omega[i] = w;
    curve.magnitude[i] = std::sqrt(re * re + im * im);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// latent mosaic

namespace {

void paint_tile(ImageU8& mosaic, const Tensor& plane, const std::vector<double>& means,
                int oy, int ox) {
  int c = plane.dim(0), h = plane.dim(1), w = plane.dim(2);
  size_t stride = static_cast<size_t>(h) * w;
  const auto& v = plane.values();
  for (int ch = 0; ch < c; ++ch) {
    double mn = 1e300, mx = -1e300;
    for (size_t i = 0; i < stride; ++i) {
      double d = static_cast<double>(v[ch * stride + i]) - means[ch];
      mn = std::min(mn, d);
      mx = std::max(mx, d);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d = static_cast<double>(v[(ch * h + y) * w + x]) - means[ch];
        double u = mx > mn ? (d - mn) / (mx - mn) : 0.5;
        mosaic.at(ch, oy + y, ox + x) = static_cast<uint8_t>(std::lround(u * 255.0));
      }
  }
}

}  // namespace

ImageU8 visualize_latents(const LatentPyramid& pyramid, const Priors& priors) {
  int c = pyramid.channels;
  ImageU8 mosaic(pyramid.width, pyramid.height, c);
  int oy = 0, ox = 0;  // current A-region origin
  for (size_t lvl = 0; lvl < pyramid.levels.size(); ++lvl) {
    const auto& planes = pyramid.levels[lvl].planes;
    int hh = planes[0].dim(1), hw = planes[0].dim(2);
    // tile origins inside the current region: B right, C below, D diagonal
    const int offs[3][2] = {{0, hw}, {hh, 0}, {hh, hw}};
    for (int q = 0; q < 3; ++q) {
      std::vector<double> means(c);
      if (priors.use_net) {
        NoGradGuard ng;
        PriorMaps maps = prior_eval(pyramid.levels[lvl].low, priors.net);
        // spatial mean of the conditional mu map as the tile zero point
        size_t stride = static_cast<size_t>(hh) * hw;
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (size_t i = 0; i < stride; ++i)
            acc += maps.mu.values()[(static_cast<size_t>(q) * c + ch) * stride + i];
          means[ch] = acc / static_cast<double>(stride);
        }
      } else {
        for (int ch = 0; ch < c; ++ch)
          means[ch] = priors.factor_mu.values()[q * c + ch];
      }
      paint_tile(mosaic, planes[q], means, oy + offs[q][0], ox + offs[q][1]);
    }
  }
  // final block: mixture means as zero points
  {
    std::vector<double> means(c, 0.0);
    int k = priors.mixture_k();
    for (int ch = 0; ch < c; ++ch) {
      double mx = -1e300;
      for (int j = 0; j < k; ++j)
        mx = std::max(mx, static_cast<double>(priors.final_logits.values()[ch * k + j]));
      double denom = 0.0;
      for (int j = 0; j < k; ++j)
        denom += std::exp(static_cast<double>(priors.final_logits.values()[ch * k + j]) - mx);
      for (int j = 0; j < k; ++j) {
        double pi_j =
            std::exp(static_cast<double>(priors.final_logits.values()[ch * k + j]) - mx) / denom;
        means[ch] += pi_j * static_cast<double>(priors.final_mu.values()[ch * k + j]);
      }
    }
    paint_tile(mosaic, pyramid.final_block, means, oy, ox);
  }
  return mosaic;
}

std::string filters_csv(const FilterBank& bank) {
  std::ostringstream os;
  os << "filter_index,kind,tap_index,value\n";
  for (int i = 0; i < bank.n; ++i)
    for (size_t t = 0; t < bank.rows[i].size(); ++t)
      os << i << "," << (bank.low_pass(i) ? "low" : "high") << "," << t << ","
         << bank.rows[i][t] << "\n";
  return os.str();
}

std::string response_csv(const FilterBank& bank, int n_samples) {
  std::ostringstream os;
  os << "filter_index,kind,omega,magnitude\n";
  for (int i = 0; i < bank.n; ++i) {
    ResponseCurve rc = freq_response(bank.rows[i], n_samples);
    for (int s = 0; s < n_samples; ++s)
      os << i << "," << (bank.low_pass(i) ? "low" : "high") << "," << rc.omega[s] << ","
         << rc.magnitude[s] << "\n";
  }
  return os.str();
}

}  // namespace nwf
