#include <cmath>

#include "doctest.h"
#include "nwf/codec.hpp"
#include "nwf/lifting.hpp"
#include "nwf/model.hpp"
#include "support.hpp"

using namespace nwf;
using nwf::testing::random_image;

namespace {

// direct lifting equations with replicate boundaries; the oracle for the
// initialized flows
void lift_oracle(const std::vector<long>& o, const std::vector<long>& e, bool haar,
                 std::vector<long>* d_out, std::vector<long>* s_out) {
  size_t n = o.size();
  std::vector<long> d(n), s(n);
  for (size_t k = 0; k < n; ++k) {
    long on = k + 1 < n ? o[k + 1] : o[n - 1];
    double pred = haar ? static_cast<double>(o[k]) : (static_cast<double>(o[k]) + on) / 2.0;
    d[k] = e[k] - round_nearest(pred);
  }
  for (size_t k = 0; k < n; ++k) {
    long dm = k > 0 ? d[k - 1] : d[0];
    double upd = haar ? static_cast<double>(d[k]) / 2.0 : (static_cast<double>(d[k]) + dm) / 4.0;
    s[k] = o[k] + round_nearest(upd);
  }
  *d_out = d;
  *s_out = s;
}

Model legall_model(int channels) {
  return make_model(Scheme::OneD, channels, 1, 2, 16, 5, false, WaveletInit::LeGall, 0);
}
Model haar_model(int channels) {
  return make_model(Scheme::OneD, channels, 1, 2, 16, 5, false, WaveletInit::Haar, 0);
}
Model random_2d_model(int channels, uint64_t seed) {
  return make_model(Scheme::TwoD, channels, 2, 1, 8, 5, false, WaveletInit::Random, seed);
}

}  // namespace

TEST_CASE("round_nearest convention") {
  CHECK(round_nearest(0.5) == 1);
  CHECK(round_nearest(-0.5) == 0);
  CHECK(round_nearest(2.0) == 2);
  CHECK(round_nearest(-1.5) == -1);
  CHECK(round_nearest(1.49) == 1);
}

TEST_CASE("quadrant partition round-trips bit-exactly") {
  Tensor x = image_to_tensor(random_image(8, 6, 3, 1));
  auto q = split_quadrants(x);
  CHECK(q[0].shape() == std::vector<int>{3, 3, 4});
  Tensor back = merge_quadrants(q[0], q[1], q[2], q[3]);
  CHECK(back.values() == x.values());
  // A holds the upper-left of each 2x2 cell
  CHECK(q[0].values()[0] == x.values()[0]);
  CHECK(q[1].values()[0] == x.values()[1]);      // B: row 0, col 1
  CHECK(q[2].values()[0] == x.values()[8]);      // C: row 1, col 0
  CHECK(q[3].values()[0] == x.values()[9]);      // D: row 1, col 1
}

TEST_CASE("even/odd partition interleave round-trip") {
  Tensor x = Tensor::from_values({1, 6}, {0, 1, 2, 3, 4, 5});
  auto [even, odd] = split_even_odd(x);
  CHECK(even.values() == std::vector<float>{0, 2, 4});
  CHECK(odd.values() == std::vector<float>{1, 3, 5});
  CHECK(merge_even_odd(even, odd).values() == x.values());
}

TEST_CASE("haar init: pair (o,e)=(2,4) gives d=2, s=3") {
  Model m = haar_model(1);
  NoGradGuard ng;
  Tensor x = Tensor::from_values({1, 2}, {2.0f, 4.0f});
  auto [even, odd] = split_even_odd(x);
  coupling_forward_1d(even, odd, m.flow.block, true);
  CHECK(odd.values()[0] == 2.0f);   // d = 4 - 2
  CHECK(even.values()[0] == 3.0f);  // s = 2 + 1
}

TEST_CASE("legall init on constant signal: d == 0, s == c") {
  Model m = legall_model(1);
  NoGradGuard ng;
  Tensor x = Tensor::full({1, 16}, 97.0f);
  auto [even, odd] = split_even_odd(x);
  coupling_forward_1d(even, odd, m.flow.block, true);
  for (float v : odd.values()) CHECK(v == 0.0f);
  for (float v : even.values()) CHECK(v == 97.0f);
}

TEST_CASE("initialized flows match the direct lifting oracle") {
  std::mt19937_64 rng(2);
  for (bool haar : {false, true}) {
    for (int channels : {1, 3}) {
      Model m = haar ? haar_model(channels) : legall_model(channels);
      for (int trial = 0; trial < 100; ++trial) {
        int n = 8 << (rng() % 3);
        std::vector<float> vals(static_cast<size_t>(channels) * n);
        for (auto& v : vals) v = static_cast<float>(rng() % 256);
        NoGradGuard ng;
        Tensor x = Tensor::from_values({channels, n}, vals);
        auto [even, odd] = split_even_odd(x);
        Tensor o0 = even.clone_detached(), e0 = odd.clone_detached();
        coupling_forward_1d(even, odd, m.flow.block, true);
        for (int c = 0; c < channels; ++c) {
          std::vector<long> o(n / 2), e(n / 2), d, s;
          for (int i = 0; i < n / 2; ++i) {
            o[i] = std::lround(o0.values()[c * (n / 2) + i]);
            e[i] = std::lround(e0.values()[c * (n / 2) + i]);
          }
          lift_oracle(o, e, haar, &d, &s);
          for (int i = 0; i < n / 2; ++i) {
            CHECK(std::lround(odd.values()[c * (n / 2) + i]) == d[i]);
            CHECK(std::lround(even.values()[c * (n / 2) + i]) == s[i]);
          }
        }
      }
    }
  }
}

TEST_CASE("zero-initialized 2D coupling leaves planes unchanged") {
  Model m = make_model(Scheme::TwoD, 3, 2, 1, 8, 5, false, WaveletInit::Zero, 0);
  NoGradGuard ng;
  Tensor x = image_to_tensor(random_image(8, 8, 3, 3));
  auto quads = split_quadrants(x);
  auto before = quads;
  coupling_forward_2d(quads, m.flow.block, true);
  for (int q = 0; q < 4; ++q) CHECK(quads[q].values() == before[q].values());
}

TEST_CASE("2D coupling inverse is exact on random integer planes") {
  Model m = random_2d_model(1, 17);
  std::mt19937_64 rng(4);
  NoGradGuard ng;
  for (int trial = 0; trial < 200; ++trial) {
    ImageU8 img = random_image(8, 8, 1, 1000 + trial);
    Tensor x = image_to_tensor(img);
    auto quads = split_quadrants(x);
    auto orig = quads;
    coupling_forward_2d(quads, m.flow.block, true);
    coupling_inverse_2d(quads, m.flow.block, true);
    for (int q = 0; q < 4; ++q) CHECK(quads[q].values() == orig[q].values());
  }
}

TEST_CASE("wavelet_forward geometry: 4x4 and 64x64") {
  Model m = legall_model(1);
  NoGradGuard ng;
  LatentPyramid p4 = wavelet_forward(image_to_tensor(random_image(4, 4, 1, 5)), m.flow);
  CHECK(p4.levels.size() == 1);
  CHECK(p4.levels[0].planes[0].shape() == std::vector<int>{1, 2, 2});
  CHECK(p4.final_block.shape() == std::vector<int>{1, 2, 2});
  CHECK(p4.coefficient_count() == 16);

  LatentPyramid p64 = wavelet_forward(image_to_tensor(random_image(64, 64, 1, 6)), m.flow);
  CHECK(p64.levels.size() == 5);
  CHECK(p64.final_block.shape() == std::vector<int>{1, 2, 2});
  CHECK(p64.coefficient_count() == 64 * 64);

  CHECK(num_iterations(64, 64) == 5);
  CHECK(num_iterations(4, 8) == 1);
  CHECK(num_iterations(2, 2) == 0);
}

TEST_CASE("wavelet_forward rejects non-power-of-two extents") {
  Model m = legall_model(1);
  NoGradGuard ng;
  CHECK_THROWS_AS(wavelet_forward(image_to_tensor(ImageU8(6, 4, 1)), m.flow), Error);
  CHECK_THROWS_AS(wavelet_forward(image_to_tensor(ImageU8(4, 12, 1)), m.flow), Error);
}

TEST_CASE("inverse(forward) is the identity, all schemes and inits") {
  NoGradGuard ng;
  std::vector<Model> models;
  models.push_back(legall_model(3));
  models.push_back(haar_model(3));
  models.push_back(random_2d_model(3, 23));
  for (auto& m : models) {
    // all-zeros image
    {
      ImageU8 img(16, 16, 3);
      Tensor x = image_to_tensor(img);
      LatentPyramid pyr = wavelet_forward(x, m.flow);
      CHECK(wavelet_inverse(pyr, m.flow).values() == x.values());
    }
    for (int trial = 0; trial < 60; ++trial) {
      ImageU8 img = random_image(16, 16, 3, 9000 + trial);
      Tensor x = image_to_tensor(img);
      LatentPyramid pyr = wavelet_forward(x, m.flow);
      Tensor back = wavelet_inverse(pyr, m.flow);
      CHECK(back.values() == x.values());
      CHECK(pyr.coefficient_count() == x.numel());
    }
  }
}

TEST_CASE("rectangular inputs stop when one extent reaches 2") {
  Model m = legall_model(1);
  NoGradGuard ng;
  Tensor x = image_to_tensor(random_image(16, 4, 1, 77));
  LatentPyramid pyr = wavelet_forward(x, m.flow);
  CHECK(pyr.levels.size() == 1);
  CHECK(pyr.final_block.shape() == std::vector<int>{1, 2, 8});
  CHECK(wavelet_inverse(pyr, m.flow).values() == x.values());
}

TEST_CASE("exhaustive 2x2 bijectivity over alphabet {0..7}") {
  // 2x2 inputs perform zero iterations; forward must still be bijective
  Model m = legall_model(1);
  NoGradGuard ng;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      for (int c = 0; c < 8; ++c)
        for (int d = 0; d < 8; ++d) {
          Tensor x = Tensor::from_values({1, 2, 2},
                                         {static_cast<float>(a), static_cast<float>(b),
                                          static_cast<float>(c), static_cast<float>(d)});
          LatentPyramid pyr = wavelet_forward(x, m.flow);
          CHECK(pyr.levels.empty());
          CHECK(wavelet_inverse(pyr, m.flow).values() == x.values());
        }
}

TEST_CASE("scheme 1 haar equals the W x W^T matrix transform (continuous)") {
  // W_haar rows: low (1/2,1/2), high (-1,1) on even/odd pairs
  Model m = haar_model(1);
  m.flow.integer_mode = false;
  NoGradGuard ng;
  ImageU8 img = random_image(4, 4, 1, 31);
  Tensor x = image_to_tensor(img);

  // oracle: y = W x W^T with the 4x4 Haar matrix, then regather quadrants
  double W[4][4] = {{0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}, {-1, 1, 0, 0}, {0, 0, -1, 1}};
  double xm[4][4], t1[4][4], t2[4][4];
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) xm[y][xx] = img.at(0, y, xx);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      t1[i][j] = 0;
      for (int k = 0; k < 4; ++k) t1[i][j] += W[i][k] * xm[k][j];
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      t2[i][j] = 0;
      for (int k = 0; k < 4; ++k) t2[i][j] += t1[i][k] * W[j][k];
    }

  LatentPyramid pyr = wavelet_forward(x, m.flow);
  // block layout: t2 upper-left 2x2 = LL = final block (one iteration on 4x4)
  // B (even row, odd col positions) = row-low col-high = t2 upper-right
  auto close = [](float a, double b) { return std::fabs(a - b) < 1e-4; };
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(close(pyr.final_block.values()[i * 2 + j], t2[i][j]));
      CHECK(close(pyr.levels[0].planes[0].values()[i * 2 + j], t2[i][2 + j]));
      CHECK(close(pyr.levels[0].planes[1].values()[i * 2 + j], t2[2 + i][j]));
      CHECK(close(pyr.levels[0].planes[2].values()[i * 2 + j], t2[2 + i][2 + j]));
    }
}

TEST_CASE("scheme 1 haar integer mode equals row/column lifting oracle") {
  Model m = haar_model(1);
  NoGradGuard ng;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    ImageU8 img = random_image(8, 8, 1, 400 + trial);
    Tensor x = image_to_tensor(img);
    LatentPyramid pyr = wavelet_forward(x, m.flow);

    // oracle: lift each row, then each column of the interleaved result
    long g[8][8];
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx) g[y][xx] = img.at(0, y, xx);
    auto lift_line = [](std::vector<long> line) {
      size_t n = line.size() / 2;
      std::vector<long> o(n), e(n), d, s;
      for (size_t i = 0; i < n; ++i) {
        o[i] = line[2 * i];
        e[i] = line[2 * i + 1];
      }
      lift_oracle(o, e, /*haar=*/true, &d, &s);
      for (size_t i = 0; i < n; ++i) {
        line[2 * i] = s[i];
        line[2 * i + 1] = d[i];
      }
      return line;
    };
    for (int y = 0; y < 8; ++y) {
      std::vector<long> row(8);
      for (int xx = 0; xx < 8; ++xx) row[xx] = g[y][xx];
      row = lift_line(row);
      for (int xx = 0; xx < 8; ++xx) g[y][xx] = row[xx];
    }
    for (int xx = 0; xx < 8; ++xx) {
      std::vector<long> col(8);
      for (int y = 0; y < 8; ++y) col[y] = g[y][xx];
      col = lift_line(col);
      for (int y = 0; y < 8; ++y) g[y][xx] = col[y];
    }
    // compare against the pyramid's first level + recursion handled by
    // checking the interleaved one-iteration result
    LatentPyramid one;
    one.width = 8; one.height = 8; one.channels = 1;
    // reconstruct the interleaved layout from pyramid level 0 and its low
    const auto& lv = pyr.levels[0];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        CHECK(std::lround(lv.low.values()[i * 4 + j]) == g[2 * i][2 * j]);
        CHECK(std::lround(lv.planes[0].values()[i * 4 + j]) == g[2 * i][2 * j + 1]);
        CHECK(std::lround(lv.planes[1].values()[i * 4 + j]) == g[2 * i + 1][2 * j]);
        CHECK(std::lround(lv.planes[2].values()[i * 4 + j]) == g[2 * i + 1][2 * j + 1]);
      }
  }
}

TEST_CASE("volume preservation: log|det| of one continuous sweep is ~0") {
  Model m = random_2d_model(1, 99);
  m.flow.integer_mode = false;
  NoGradGuard ng;
  // numeric 16x16 Jacobian of one coupling sweep on a 4x4 input
  const int n = 16;
  auto transform = [&](const std::vector<float>& in) {
    Tensor x = Tensor::from_values({1, 4, 4}, in);
    auto quads = split_quadrants(x);
    coupling_forward_2d(quads, m.flow.block, false);
    return merge_quadrants(quads[0], quads[1], quads[2], quads[3]).values();
  };
  std::vector<float> base(n);
  std::mt19937_64 rng(3);
  for (auto& v : base) v = static_cast<float>(rng() % 256);
  double jac[16][16];
  const double h = 0.25;
  for (int j = 0; j < n; ++j) {
    auto up = base, down = base;
    up[j] += static_cast<float>(h);
    down[j] -= static_cast<float>(h);
    auto yu = transform(up), yd = transform(down);
    for (int i = 0; i < n; ++i) jac[i][j] = (yu[i] - yd[i]) / (2.0 * h);
  }
  // LU determinant with partial pivoting
  double det = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(jac[i][k]) > std::fabs(jac[piv][k])) piv = i;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(jac[k][j], jac[piv][j]);
      det = -det;
    }
    det *= jac[k][k];
    for (int i = k + 1; i < n; ++i) {
      double f = jac[i][k] / jac[k][k];
      for (int j = k; j < n; ++j) jac[i][j] -= f * jac[k][j];
    }
  }
  CHECK(std::fabs(std::log(std::fabs(det))) < 1e-3);
}

TEST_CASE("integer overflow beyond signed 16-bit aborts") {
  Model m = make_model(Scheme::TwoD, 1, 1, 0, 4, 5, false, WaveletInit::Zero, 0);
  // huge constant output: bias of the last conv drives values out of range
  auto& last = m.flow.block.nets[0].layers.back();
  last.bias.values_mut()[0] = 200.0f;  // *255 after out_scale -> 51000
  NoGradGuard ng;
  Tensor x = image_to_tensor(nwf::testing::random_image(8, 8, 1, 1));
  CHECK_THROWS_AS(wavelet_forward(x, m.flow), Error);
}

TEST_CASE("parameter sharing: one block regardless of input size") {
  Model m = random_2d_model(1, 7);
  auto bytes_a = serialize_model(m);
  NoGradGuard ng;
  // transforming different sizes touches no parameters
  wavelet_forward(image_to_tensor(random_image(32, 32, 1, 1)), m.flow);
  wavelet_forward(image_to_tensor(random_image(64, 64, 1, 2)), m.flow);
  CHECK(serialize_model(m) == bytes_a);
  // the serialized form stores exactly repeat nets for scheme 2
  Model parsed = parse_model(bytes_a);
  CHECK(parsed.flow.block.nets.size() == static_cast<size_t>(m.repeat));
}

TEST_CASE("model file round-trip preserves behavior bit-exactly") {
  Model m = random_2d_model(3, 55);
  auto bytes = serialize_model(m);
  Model back = parse_model(bytes);
  CHECK(model_hash(m) == model_hash(back));
  NoGradGuard ng;
  ImageU8 img = random_image(16, 16, 3, 8);
  Tensor x = image_to_tensor(img);
  LatentPyramid pa = wavelet_forward(x, m.flow);
  LatentPyramid pb = wavelet_forward(x, back.flow);
  CHECK(pa.final_block.values() == pb.final_block.values());
  for (size_t i = 0; i < pa.levels.size(); ++i)
    for (int q = 0; q < 3; ++q)
      CHECK(pa.levels[i].planes[q].values() == pb.levels[i].planes[q].values());
}

TEST_CASE("revive_dead_nets keeps the transform identical") {
  Model m = make_model(Scheme::OneD, 3, 2, 2, 16, 5, false, WaveletInit::LeGall, 0);
  NoGradGuard ng;
  ImageU8 img = random_image(16, 16, 3, 11);
  Tensor x = image_to_tensor(img);
  LatentPyramid before = wavelet_forward(x, m.flow);
  revive_dead_nets(m.flow.block, 42);
  // extra predict/update nets (repeat 2) were all-zero; still output zero
  LatentPyramid after = wavelet_forward(x, m.flow);
  CHECK(before.final_block.values() == after.final_block.values());
  for (size_t i = 0; i < before.levels.size(); ++i)
    for (int q = 0; q < 3; ++q)
      CHECK(before.levels[i].planes[q].values() == after.levels[i].planes[q].values());
  // and the hidden layers are no longer all zero
  CHECK_FALSE(m.flow.block.nets[2].all_zero());
}
