#pragma once

#include <vector>

#include "nwf/tensor.hpp"

namespace nwf {

// Adamax with the per-epoch schedule lr = lr_base * decay^epoch.
struct AdamaxState {
  long step = 0;
  double lr_base = 1e-3;
  double decay = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<float>> first_moment;  // one buffer per parameter
  std::vector<std::vector<float>> inf_norm;
};

class Adamax {
 public:
  Adamax(std::vector<Tensor> params, double lr_base, double decay);

  // One update from the accumulated grads; parameters without grads are
  // treated as zero-gradient. Clears no grads itself.
  void step(int epoch);
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  AdamaxState& state() { return state_; }
  const AdamaxState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamaxState state_;
};

}  // namespace nwf
