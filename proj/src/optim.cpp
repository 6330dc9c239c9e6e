#include "nwf/optim.hpp"

#include <cmath>

namespace nwf {

Adamax::Adamax(std::vector<Tensor> params, double lr_base, double decay)
    : params_(std::move(params)) {
  state_.lr_base = lr_base;
  state_.decay = decay;
  state_.first_moment.resize(params_.size());
  state_.inf_norm.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    state_.first_moment[i].assign(params_[i].numel(), 0.0f);
    state_.inf_norm[i].assign(params_[i].numel(), 0.0f);
  }
}

void Adamax::step(int epoch) {
  state_.step += 1;
  const double lr = state_.lr_base * std::pow(state_.decay, epoch);
  const double bias_fix = 1.0 - std::pow(state_.beta1, static_cast<double>(state_.step));
  const float b1 = static_cast<float>(state_.beta1);
  const float b2 = static_cast<float>(state_.beta2);
  const float eps = static_cast<float>(state_.epsilon);
  const float rate = static_cast<float>(lr / bias_fix);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& v = params_[i].values_mut();
    auto& m = state_.first_moment[i];
    auto& u = state_.inf_norm[i];
    const bool has_grad = params_[i].has_grad();
    const auto& g = params_[i].grad();
    for (size_t j = 0; j < v.size(); ++j) {
      float gj = has_grad ? g[j] : 0.0f;
      require(std::isfinite(gj), Errc::numeric, "adamax: non-finite gradient");
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      float ag = std::fabs(gj);
      u[j] = b2 * u[j] > ag ? b2 * u[j] : ag;
      v[j] -= rate * m[j] / (u[j] + eps);
      require(std::isfinite(v[j]), Errc::numeric, "adamax: non-finite parameter");
    }
  }
}

void Adamax::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace nwf
