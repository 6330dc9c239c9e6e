#include <cmath>

#include "doctest.h"
#include "nwf/codec.hpp"
#include "nwf/prior.hpp"
#include "nwf/rans.hpp"
#include "support.hpp"

using namespace nwf;
using nwf::testing::finite_diff;
using nwf::testing::rel_err;

namespace {

// independent oracle: numeric logistic CDF differences
double oracle_pmf(long z, double mu, double s, long lo, long hi) {
  auto cdf = [&](double x) { return 1.0 / (1.0 + std::exp(-(x - mu) / s)); };
  if (z <= lo) return cdf(z + 0.5);
  if (z >= hi) return 1.0 - cdf(z - 0.5);
  return cdf(z + 0.5) - cdf(z - 0.5);
}

}  // namespace

TEST_CASE("dl_log_pmf: mu=0 s=1 z=0 equals sigma(.5)-sigma(-.5)") {
  double p = std::exp(dl_log_pmf(0, 0.0, 0.0, -100, 100));
  CHECK(p == doctest::Approx(0.2449187).epsilon(1e-5));
  CHECK(p == doctest::Approx(oracle_pmf(0, 0.0, 1.0, -100, 100)).epsilon(1e-9));
}

TEST_CASE("dl_log_pmf symmetry about mu=0") {
  for (long z = 1; z <= 20; ++z)
    CHECK(dl_log_pmf(z, 0.0, 0.3, -50, 50) ==
          doctest::Approx(dl_log_pmf(-z, 0.0, 0.3, -50, 50)).epsilon(1e-9));
}

TEST_CASE("dl pmf sums to 1 over the folded support") {
  for (double mu : {0.0, 3.7, -12.25}) {
    for (double log_s : {-2.0, 0.0, 2.5}) {
      auto pmf = dl_pmf_table(mu, log_s, -40, 40);
      double s = 0.0;
      for (double p : pmf) s += p;
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("dl_log_pmf matches the numeric oracle across the support") {
  for (long z = -30; z <= 30; ++z) {
    double mine = std::exp(dl_log_pmf(z, 1.5, std::log(2.0), -30, 30));
    double want = oracle_pmf(z, 1.5, 2.0, -30, 30);
    CHECK(std::fabs(mine - want) < 1e-12);
  }
}

TEST_CASE("dl_log_pmf rejects z outside support") {
  CHECK_THROWS_AS(dl_log_pmf(11, 0.0, 0.0, -10, 10), Error);
}

TEST_CASE("mixture with K=1 equals the single logistic") {
  MixtureParams mix;
  mix.log_pi = {0.0};
  mix.mu = {2.0};
  mix.log_s = {0.5};
  for (long z = -10; z <= 10; ++z)
    CHECK(mixture_log_pmf(z, mix, -20, 20) ==
          doctest::Approx(dl_log_pmf(z, 2.0, 0.5, -20, 20)).epsilon(1e-12));
}

TEST_CASE("mixture of equal components equals the component") {
  MixtureParams mix;
  mix.log_pi = {std::log(0.3), std::log(0.7)};
  mix.mu = {1.0, 1.0};
  mix.log_s = {0.2, 0.2};
  for (long z = -5; z <= 5; ++z)
    CHECK(mixture_log_pmf(z, mix, -20, 20) ==
          doctest::Approx(dl_log_pmf(z, 1.0, 0.2, -20, 20)).epsilon(1e-10));
}

TEST_CASE("two-component mixture matches brute-force summation") {
  MixtureParams mix;
  mix.log_pi = {std::log(0.25), std::log(0.75)};
  mix.mu = {-3.0, 4.0};
  mix.log_s = {0.0, 1.0};
  for (long z = -15; z <= 15; ++z) {
    double want = 0.25 * oracle_pmf(z, -3.0, 1.0, -15, 15) +
                  0.75 * oracle_pmf(z, 4.0, std::exp(1.0), -15, 15);
    CHECK(std::exp(mixture_log_pmf(z, mix, -15, 15)) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("mixture pmf sums to 1") {
  MixtureParams mix;
  mix.log_pi = {std::log(0.2), std::log(0.5), std::log(0.3)};
  mix.mu = {-5.0, 0.0, 9.5};
  mix.log_s = {0.0, -1.0, 2.0};
  auto pmf = mixture_pmf_table(mix, -60, 60);
  double s = 0.0;
  for (double p : pmf) s += p;
  CHECK(std::fabs(s - 1.0) < 1e-9);
}

TEST_CASE("dl_sample: s -> 0 returns round(mu)") {
  std::mt19937_64 rng(1);
  for (double mu : {2.2, -3.4, 7.0})
    for (int i = 0; i < 20; ++i)
      CHECK(dl_sample(mu, -20.0, -100, 100, rng) == round_nearest(mu));
}

TEST_CASE("dl_sample: empirical mean within 3 sigma / sqrt(n)") {
  std::mt19937_64 rng(2);
  const double mu = 3.0, s = 4.0;
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(dl_sample(mu, std::log(s), -500, 500, rng));
  double mean = acc / n;
  double sigma = s * std::acos(-1.0) / std::sqrt(3.0);  // logistic std = s*pi/sqrt(3)
  CHECK(std::fabs(mean - mu) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("dl_sample histogram passes a chi-square check against the pmf") {
  std::mt19937_64 rng(3);
  const double mu = 0.0, log_s = std::log(2.0);
  const long lo = -15, hi = 15;
  const int n = 200000;
  std::vector<long> counts(hi - lo + 1, 0);
  for (int i = 0; i < n; ++i) counts[dl_sample(mu, log_s, lo, hi, rng) - lo]++;
  auto pmf = dl_pmf_table(mu, log_s, lo, hi);
  double chi2 = 0.0;
  int dof = 0;
  for (size_t k = 0; k < pmf.size(); ++k) {
    double expect = pmf[k] * n;
    if (expect < 5.0) continue;
    chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
    ++dof;
  }
  // generous 99.9% bound for ~25 dof
  CHECK(chi2 < dof + 5.0 * std::sqrt(2.0 * dof));
}

TEST_CASE("deterministic sampling per seed") {
  std::mt19937_64 a(77), b(77);
  for (int i = 0; i < 100; ++i)
    CHECK(dl_sample(1.0, 0.7, -100, 100, a) == dl_sample(1.0, 0.7, -100, 100, b));
}

TEST_CASE("quantize grids: idempotent, clamped") {
  for (double v : {0.013, -5.37, 100.2}) {
    CHECK(quantize_mu(quantize_mu(v)) == quantize_mu(v));
    CHECK(quantize_log_s(quantize_log_s(v)) == quantize_log_s(v));
  }
  CHECK(quantize_log_s(-12.0) == -7.0);
  CHECK(quantize_log_s(9.0) == 5.0);
  CHECK(quantize_mu(1.0 / 128.0) == doctest::Approx(1.0 / 64.0));  // rounds up at half
}

TEST_CASE("prior_eval: zero-weight net gives the bias constants everywhere") {
  Priors pr = make_priors(Scheme::TwoD, 3, 5, true, 8, 1);
  // make_priors zeroes the last layer and sets its bias to (mu0, ls0)
  Tensor low = Tensor::full({3, 4, 4}, 128.0f);
  NoGradGuard ng;
  PriorMaps maps = prior_eval(low, pr.net);
  CHECK(maps.mu.shape() == std::vector<int>{9, 4, 4});
  CHECK(maps.log_s.shape() == std::vector<int>{9, 4, 4});
  for (float v : maps.mu.values()) CHECK(v == 128.0f);
  for (float v : maps.log_s.values()) CHECK(v == 4.0f);
}

TEST_CASE("prior_eval output shape equals the high-pass plane shape") {
  Priors pr = make_priors(Scheme::TwoD, 1, 5, true, 8, 2);
  Tensor low = nwf::testing::random_tensor({1, 8, 16}, 5, 0.0f, 255.0f);
  NoGradGuard ng;
  PriorMaps maps = prior_eval(low, pr.net);
  CHECK(maps.mu.shape() == std::vector<int>{3, 8, 16});
}

TEST_CASE("pyramid_log_prob equals the sum of per-symbol terms") {
  Model m = make_model(Scheme::OneD, 1, 1, 2, 16, 5, false, WaveletInit::LeGall, 0);
  // wide scales keep every term on the exact CDF-difference branch, where
  // the float and double paths agree closely
  for (auto& v : m.priors.factor_log_s.values_mut()) v = 1.5f;
  NoGradGuard ng;
  ImageU8 img = nwf::testing::smooth_image(16, 16, 1, 9);
  LatentPyramid pyr = wavelet_forward(image_to_tensor(img), m.flow);
  double total = static_cast<double>(pyramid_log_prob(pyr, m.priors).item());

  // independent accumulation with the double-precision path (unquantized)
  double want = 0.0;
  for (const auto& lv : pyr.levels)
    for (int q = 0; q < 3; ++q)
      for (float v : lv.planes[q].values())
        want += dl_log_pmf(std::lround(v), m.priors.factor_mu.values()[q],
                           m.priors.factor_log_s.values()[q], -32768, 32767);
  MixtureParams mix;
  {
    int k = m.mixture_k;
    mix.log_pi.assign(k, std::log(1.0 / k));
    for (int j = 0; j < k; ++j) {
      mix.mu.push_back(m.priors.final_mu.values()[j]);
      mix.log_s.push_back(m.priors.final_log_s.values()[j]);
    }
  }
  for (float v : pyr.final_block.values())
    want += mixture_log_pmf(std::lround(v), mix, -32768, 32767);
  CHECK(rel_err(total, want) < 1e-4);
}

TEST_CASE("mode maximality: log prob peaks at the distribution mode") {
  // all coefficients at the prior mode beat any single perturbation
  Model m = make_model(Scheme::OneD, 1, 1, 2, 16, 5, false, WaveletInit::LeGall, 0);
  NoGradGuard ng;
  ImageU8 img(8, 8, 1);
  for (auto& v : img.data) v = 128;  // constant -> high-pass exactly at mode 0
  LatentPyramid pyr = wavelet_forward(image_to_tensor(img), m.flow);
  double base = static_cast<double>(pyramid_log_prob(pyr, m.priors).item());
  for (int q = 0; q < 3; ++q) {
    for (float delta : {-2.0f, -1.0f, 1.0f, 2.0f}) {
      LatentPyramid mod = pyr;
      Tensor p = pyr.levels[0].planes[q].clone_detached();
      p.values_mut()[3] += delta;
      mod.levels[0].planes[q] = p;
      double v = static_cast<double>(pyramid_log_prob(mod, m.priors).item());
      CHECK(v < base);
    }
  }
}

TEST_CASE("gradients of pyramid_log_prob match finite differences") {
  Model m = make_model(Scheme::OneD, 1, 1, 2, 8, 3, false, WaveletInit::LeGall, 0);
  ImageU8 img = nwf::testing::smooth_image(8, 8, 1, 13);
  Tensor x = image_to_tensor(img);
  auto value = [&]() {
    NoGradGuard ng;
    LatentPyramid pyr = wavelet_forward(x, m.flow);
    return static_cast<double>(pyramid_log_prob(pyr, m.priors).item());
  };
  LatentPyramid pyr = wavelet_forward(x, m.flow);
  backward(pyramid_log_prob(pyr, m.priors));
  for (Tensor p : {m.priors.factor_mu, m.priors.factor_log_s, m.priors.final_mu,
                   m.priors.final_log_s, m.priors.final_logits}) {
    for (size_t i = 0; i < p.numel(); ++i) {
      double fd = finite_diff(p, i, 1e-2, value);
      double ad = p.has_grad() ? p.grad()[i] : 0.0;
      if (std::fabs(fd) < 1e-5 && std::fabs(ad) < 1e-5) continue;
      CHECK(rel_err(fd, ad) < 2e-2);
    }
  }
}

TEST_CASE("monotone CDF after table flooring") {
  auto pmf = dl_pmf_table(0.0, -6.5, -200, 200);  // very sharp: most mass on one symbol
  FrequencyTable t = build_table(pmf, -200);
  for (size_t i = 0; i + 1 < t.cum.size(); ++i) CHECK(t.cum[i + 1] > t.cum[i]);
}
