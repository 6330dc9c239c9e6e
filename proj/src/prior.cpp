#include "nwf/prior.hpp"

#include <algorithm>
#include <cmath>

namespace nwf {

namespace {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

constexpr double kDeltaFloor = 1e-12;

}  // namespace

double dl_log_pmf(long z, double mu, double log_s, long lo, long hi) {
  require(z >= lo && z <= hi, Errc::contract, "dl_log_pmf: z outside support");
  double inv_s = std::exp(-log_s);
  double a = (static_cast<double>(z) - 0.5 - mu) * inv_s;
  double b = (static_cast<double>(z) + 0.5 - mu) * inv_s;
  if (z <= lo) return log_sigmoid(b);
  if (z >= hi) return log_sigmoid(-a);
  double delta = sigmoid(b) - sigmoid(a);
  if (delta > kDeltaFloor) return std::log(delta);
  // pdf-at-midpoint approximation, exact enough in the far tails
  double c = (static_cast<double>(z) - mu) * inv_s;
  double ac = std::fabs(c);
  return -ac - 2.0 * std::log1p(std::exp(-ac)) - log_s;
}

std::vector<double> dl_pmf_table(double mu, double log_s, long lo, long hi) {
  require(hi >= lo, Errc::contract, "dl_pmf_table: empty support");
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  for (long z = lo; z <= hi; ++z) pmf[z - lo] = std::exp(dl_log_pmf(z, mu, log_s, lo, hi));
  return pmf;
}

long dl_sample(double mu, double log_s, long lo, long hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double u = uni(rng);
  u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
  double s = std::exp(log_s);
  // smallest z with CDF(z) = sigma((z + 0.5 - mu)/s) >= u
  double z = std::ceil(mu - 0.5 + s * std::log(u / (1.0 - u)));
  if (z < static_cast<double>(lo)) return lo;
  if (z > static_cast<double>(hi)) return hi;
  return static_cast<long>(z);
}

double mixture_log_pmf(long z, const MixtureParams& mix, long lo, long hi) {
  require(!mix.mu.empty() && mix.mu.size() == mix.log_s.size() &&
              mix.mu.size() == mix.log_pi.size(),
          Errc::contract, "mixture_log_pmf: inconsistent component counts");
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(mix.mu.size());
  for (size_t k = 0; k < mix.mu.size(); ++k) {
    terms[k] = mix.log_pi[k] + dl_log_pmf(z, mix.mu[k], mix.log_s[k], lo, hi);
    mx = std::max(mx, terms[k]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

std::vector<double> mixture_pmf_table(const MixtureParams& mix, long lo, long hi) {
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  for (long z = lo; z <= hi; ++z) pmf[z - lo] = std::exp(mixture_log_pmf(z, mix, lo, hi));
  return pmf;
}

long mixture_sample(const MixtureParams& mix, long lo, long hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double u = uni(rng);
  double acc = 0.0;
  size_t pick = mix.mu.size() - 1;
  for (size_t k = 0; k < mix.mu.size(); ++k) {
    acc += std::exp(mix.log_pi[k]);
    if (u < acc) {
      pick = k;
      break;
    }
  }
  return dl_sample(mix.mu[pick], mix.log_s[pick], lo, hi, rng);
}

double quantize_mu(double mu) { return std::floor(mu * 64.0 + 0.5) / 64.0; }

double quantize_log_s(double log_s) {
  double c = std::min(std::max(log_s, -7.0), 5.0);
  return std::floor(c * 32.0 + 0.5) / 32.0;
}

// ---------------------------------------------------------------------------
// learnable priors

std::vector<Tensor> Priors::parameters() const {
  std::vector<Tensor> ps = {factor_mu, factor_log_s, final_logits, final_mu, final_log_s};
  if (use_net)
    for (const auto& p : net.parameters()) ps.push_back(p);
  return ps;
}

Priors make_priors(Scheme scheme, int channels, int mixture_k, bool use_net, int hidden_channel,
                   int n_hidden) {
  require(mixture_k >= 1, Errc::contract, "make_priors: K >= 1");
  Priors pr;
  float mu0 = scheme == Scheme::OneD ? 0.0f : 128.0f;
  float ls0 = scheme == Scheme::OneD ? -0.5f : 4.0f;
  pr.factor_mu = Tensor::param({3, channels}, std::vector<float>(3 * channels, mu0));
  pr.factor_log_s = Tensor::param({3, channels}, std::vector<float>(3 * channels, ls0));
  std::vector<float> mmu(static_cast<size_t>(channels) * mixture_k);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < mixture_k; ++k)
      mmu[c * mixture_k + k] =
          128.0f + 51.0f * (static_cast<float>(k) - static_cast<float>(mixture_k - 1) / 2.0f);
  pr.final_mu = Tensor::param({channels, mixture_k}, std::move(mmu));
  pr.final_log_s = Tensor::param({channels, mixture_k},
                                 std::vector<float>(static_cast<size_t>(channels) * mixture_k,
                                                    std::log(32.0f)));
  pr.final_logits = Tensor::param({channels, mixture_k},
                                  std::vector<float>(static_cast<size_t>(channels) * mixture_k, 0.0f));
  pr.use_net = use_net;
  if (use_net) {
    pr.net = make_prior_net(channels, hidden_channel, n_hidden);
    // nonzero hidden layers, zero last: constant (mu0, log_s0) at start
    randomize_net(pr.net, /*seed=*/0x9d2c5680, /*zero_last=*/true);
    auto& last = pr.net.layers.back();
    auto& b = last.bias.values_mut();
    for (int q = 0; q < 3; ++q)
      for (int c = 0; c < channels; ++c) {
        b[q * channels + c] = mu0;
        b[3 * channels + q * channels + c] = ls0;
      }
  }
  return pr;
}

PriorMaps prior_eval(const Tensor& low_plane, const ConvNet& net) {
  require(low_plane.rank() == 3, Errc::contract, "prior_eval: expects [C,H,W]");
  int c = low_plane.dim(0);
  require(!net.layers.empty() && net.layers.front().in_channels == c &&
              net.layers.back().out_channels == 6 * c,
          Errc::contract, "prior_eval: net geometry mismatch");
  Tensor out = apply_net(net, low_plane);  // [6C, h, w]
  int h = out.dim(1), w = out.dim(2);
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<int> mu_idx(static_cast<size_t>(3 * c) * plane);
  std::vector<int> ls_idx(static_cast<size_t>(3 * c) * plane);
  for (int ch = 0; ch < 3 * c; ++ch)
    for (size_t i = 0; i < plane; ++i) {
      mu_idx[ch * plane + i] = static_cast<int>(ch * plane + i);
      ls_idx[ch * plane + i] = static_cast<int>((3 * c + ch) * plane + i);
    }
  PriorMaps maps;
  maps.mu = map_gather(out, {3 * c, h, w}, std::move(mu_idx));
  maps.log_s = map_gather(out, {3 * c, h, w}, std::move(ls_idx));
  return maps;
}

namespace {

constexpr int kSupportLo = -32768;
constexpr int kSupportHi = 32767;

Tensor slice_rows(const Tensor& t, int row) {
  // [R, C] -> [C]
  int c = t.dim(1);
  std::vector<int> idx(c);
  for (int i = 0; i < c; ++i) idx[i] = row * c + i;
  return map_gather(t, {c}, std::move(idx));
}

Tensor slice_cols(const Tensor& t, int col) {
  // [R, K] -> [R]
  int r = t.dim(0), k = t.dim(1);
  std::vector<int> idx(r);
  for (int i = 0; i < r; ++i) idx[i] = i * k + col;
  return map_gather(t, {r}, std::move(idx));
}

Tensor slice_channels(const Tensor& t, int from, int count) {
  int h = t.dim(1), w = t.dim(2);
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<int> idx(static_cast<size_t>(count) * plane);
  for (int ch = 0; ch < count; ++ch)
    for (size_t i = 0; i < plane; ++i)
      idx[ch * plane + i] = static_cast<int>((from + ch) * plane + i);
  return map_gather(t, {count, h, w}, std::move(idx));
}

}  // namespace

Tensor pyramid_log_prob(const LatentPyramid& pyramid, const Priors& priors) {
  int c = priors.channels();
  require(pyramid.channels == c, Errc::contract, "pyramid_log_prob: channel mismatch");
  Tensor total = Tensor::scalar(0.0f);
  for (const auto& lv : pyramid.levels) {
    if (priors.use_net) {
      PriorMaps maps = prior_eval(lv.low, priors.net);
      for (int q = 0; q < 3; ++q) {
        Tensor mu_q = slice_channels(maps.mu, q * c, c);
        Tensor ls_q = slice_channels(maps.log_s, q * c, c);
        Tensor lp = discrete_logistic_log_pmf(lv.planes[q], mu_q, ls_q, kSupportLo, kSupportHi);
        total = add(total, sum(lp));
      }
    } else {
      for (int q = 0; q < 3; ++q) {
        Tensor mu_q = slice_rows(priors.factor_mu, q);
        Tensor ls_q = slice_rows(priors.factor_log_s, q);
        Tensor lp = discrete_logistic_log_pmf(lv.planes[q], mu_q, ls_q, kSupportLo, kSupportHi);
        total = add(total, sum(lp));
      }
    }
  }
  // final block: per-channel K-component mixture
  int k = priors.mixture_k();
  Tensor log_pi = log_softmax_rows(priors.final_logits);  // [C, K]
  std::vector<Tensor> stack;
  for (int j = 0; j < k; ++j) {
    Tensor mu_j = slice_cols(priors.final_mu, j);
    Tensor ls_j = slice_cols(priors.final_log_s, j);
    Tensor comp = discrete_logistic_log_pmf(pyramid.final_block, mu_j, ls_j, kSupportLo, kSupportHi);
    stack.push_back(broadcast_add_channel(comp, slice_cols(log_pi, j)));
  }
  total = add(total, sum(logsumexp_stack(stack)));
  return total;
}

Tensor pyramid_bpd(const LatentPyramid& pyramid, const Priors& priors) {
  size_t dims = static_cast<size_t>(pyramid.width) * pyramid.height * pyramid.channels;
  Tensor lp = pyramid_log_prob(pyramid, priors);
  return scale(lp, static_cast<float>(-1.0 / (std::log(2.0) * static_cast<double>(dims))));
}

}  // namespace nwf
