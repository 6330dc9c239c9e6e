#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nwf/conv.hpp"
#include "nwf/lifting.hpp"
#include "nwf/tensor.hpp"

namespace nwf {

// ---------------------------------------------------------------------------
// coder-side double-precision discrete logistic (pmf by CDF differences at
// half-integers, tails folded into the endpoints of [lo, hi])

double dl_log_pmf(long z, double mu, double log_s, long lo, long hi);
std::vector<double> dl_pmf_table(double mu, double log_s, long lo, long hi);
// Inverse-CDF sample, clamped to [lo, hi]; deterministic given the rng state.
long dl_sample(double mu, double log_s, long lo, long hi, std::mt19937_64& rng);

struct MixtureParams {
  std::vector<double> log_pi;  // already log-softmaxed
  std::vector<double> mu;
  std::vector<double> log_s;
};

double mixture_log_pmf(long z, const MixtureParams& mix, long lo, long hi);
std::vector<double> mixture_pmf_table(const MixtureParams& mix, long lo, long hi);
long mixture_sample(const MixtureParams& mix, long lo, long hi, std::mt19937_64& rng);

// Fixed grids so encoder and decoder derive identical tables: mu on 1/64,
// log_s clamped to [-7, 5] then on 1/32.
double quantize_mu(double mu);
double quantize_log_s(double log_s);

// ---------------------------------------------------------------------------
// learnable prior parameters (tensor side, shared across iterations)

struct Priors {
  // per quadrant-slot (B, C, D) and channel
  Tensor factor_mu;     // [3, C]
  Tensor factor_log_s;  // [3, C]
  // final-block K-component mixture, per channel
  Tensor final_logits;  // [C, K]
  Tensor final_mu;      // [C, K]
  Tensor final_log_s;   // [C, K]
  bool use_net = false;
  ConvNet net;  // C -> 6C: mu for B,C,D then log_s for B,C,D

  int channels() const { return factor_mu.dim(1); }
  int mixture_k() const { return final_mu.dim(1); }
  std::vector<Tensor> parameters() const;
};

// Defaults chosen per scheme: scheme 1 factors are residual-like (mu 0),
// scheme 2 starts as an identity reshuffle so factors are pixel-like.
Priors make_priors(Scheme scheme, int channels, int mixture_k, bool use_net, int hidden_channel,
                   int n_hidden);

struct PriorMaps {
  Tensor mu;     // [3C, h, w]
  Tensor log_s;  // [3C, h, w]
};

// Evaluate the conditional parameter maps for B, C, D from the low-pass
// plane. Output spatial shape equals the high-pass plane shape.
PriorMaps prior_eval(const Tensor& low_plane, const ConvNet& net);

// Training-time log-likelihood of the whole pyramid in nats (no Jacobian
// term: the couplings are additive).
Tensor pyramid_log_prob(const LatentPyramid& pyramid, const Priors& priors);

// Bits per dimension of the pyramid under the priors (tensor, differentiable).
Tensor pyramid_bpd(const LatentPyramid& pyramid, const Priors& priors);

}  // namespace nwf
