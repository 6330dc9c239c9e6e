#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nwf/image.hpp"
#include "nwf/model.hpp"
#include "nwf/tensor.hpp"

namespace nwf::testing {

inline ImageU8 random_image(int w, int h, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageU8 img(w, h, c);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng() & 0xff);
  return img;
}

// Natural-ish synthetic image: smooth random cosine field plus mild noise.
// Spatially correlated, so wavelet residuals are small.
inline ImageU8 smooth_image(int w, int h, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageU8 img(w, h, c);
  for (int ch = 0; ch < c; ++ch) {
    double fx = 0.5 + 3.0 * uni(rng), fy = 0.5 + 3.0 * uni(rng);
    double px = 6.28 * uni(rng), py = 6.28 * uni(rng);
    double base = 60.0 + 130.0 * uni(rng);
    double amp = 30.0 + 60.0 * uni(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = base +
                   amp * std::sin(fx * 6.28 * x / w + px) * std::cos(fy * 6.28 * y / h + py) +
                   8.0 * (uni(rng) - 0.5);
        v = std::min(255.0, std::max(0.0, v));
        img.at(ch, y, x) = static_cast<uint8_t>(std::lround(v));
      }
  }
  return img;
}

inline Tensor random_tensor(std::vector<int> shape, uint64_t seed, float lo = -1.0f,
                            float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(lo, hi);
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  std::vector<float> v(n);
  for (auto& x : v) x = uni(rng);
  return Tensor::from_values(std::move(shape), std::move(v));
}

// Central finite difference of scalar_fn at param entry i.
template <typename Fn>
double finite_diff(Tensor param, size_t i, double h, Fn scalar_fn) {
  float saved = param.values()[i];
  param.values_mut()[i] = static_cast<float>(saved + h);
  double up = scalar_fn();
  param.values_mut()[i] = static_cast<float>(saved - h);
  double down = scalar_fn();
  param.values_mut()[i] = saved;
  return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  double denom = std::max(std::fabs(a), std::fabs(b));
  if (denom < 1e-6) return std::fabs(a - b);
  return std::fabs(a - b) / denom;
}

}  // namespace nwf::testing
