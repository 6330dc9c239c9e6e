#pragma once

#include <span>
#include <string>
#include <vector>

#include "nwf/lifting.hpp"
#include "nwf/prior.hpp"

namespace nwf {

enum class WaveletInit { Zero, Haar, LeGall, Random };

// The trained artifact: one shared coupling block plus the priors. The
// model file fixes decoder behavior bit-exactly; its hash is embedded in
// every compressed container.
struct Model {
  uint16_t version = 1;
  int channels = 3;
  int repeat = 2;
  int n_hidden = 2;
  int hidden_channel = 64;
  int mixture_k = 5;
  bool prior_net = false;
  WaveletFlow flow;  // block carries the scheme
  Priors priors;

  Scheme scheme() const { return flow.block.scheme; }
  std::vector<Tensor> parameters() const;
};

Model make_model(Scheme scheme, int channels, int repeat, int n_hidden, int hidden_channel,
                 int mixture_k, bool prior_net, WaveletInit init, uint64_t seed);

std::vector<uint8_t> serialize_model(const Model& m);
Model parse_model(std::span<const uint8_t> bytes);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);
// FNV-1a over the serialized bytes; what the container embeds.
uint64_t model_hash(const Model& m);

}  // namespace nwf
