#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "nwf/error.hpp"

namespace nwf {

class Tensor;

namespace detail {

struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<Tensor> parents;
  std::function<void(TensorImpl&)> backward_fn;  // pulls grad, pushes into parents

  void accumulate(const std::vector<float>& g);
  void accumulate_at(size_t i, float g);
};

bool grad_enabled();

}  // namespace detail

// Value-semantics handle to a node in the computation graph. Copies are
// shallow; the graph is the set of parent links recorded while grad mode
// is on and some input requires gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float v);
  static Tensor from_values(std::vector<int> shape, std::vector<float> values);
  static Tensor scalar(float v) { return from_values({1}, {v}); }
  // Leaf with requires_grad set; the unit trained by the optimizer.
  static Tensor param(std::vector<int> shape, std::vector<float> values);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  size_t numel() const { return impl_->value.size(); }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  const std::vector<float>& values() const { return impl_->value; }
  std::vector<float>& values_mut() { return impl_->value; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  const std::vector<float>& grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  detail::TensorImpl* impl() const { return impl_.get(); }

  // Deep copy of values only (no graph link).
  Tensor clone_detached() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_node(std::vector<int> shape, std::vector<float> value,
                          std::vector<Tensor> parents,
                          std::function<void(detail::TensorImpl&)> backward_fn);
};

// Graph-node factory used by all ops (records parents only while grad
// mode is on and some parent requires gradients).
Tensor make_node(std::vector<int> shape, std::vector<float> value, std::vector<Tensor> parents,
                 std::function<void(detail::TensorImpl&)> backward_fn);

// Disables graph recording for the current thread while alive.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Elementwise / reduction ops. All are deterministic: fixed loop order,
// no reassociation.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);  // -> shape {1}
// Nearest-integer rounding, halves toward +inf; straight-through gradient.
Tensor round_st(const Tensor& a);

// Gather out[i] = a[index[i]]; backward scatter-adds. The workhorse behind
// partitions, slices and transposes.
Tensor map_gather(const Tensor& a, std::vector<int> out_shape, std::vector<int> index);

// Concatenate [C_i,H,W] blocks along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);
// Broadcast-add a per-channel vector [C] onto a [C,...] tensor.
Tensor broadcast_add_channel(const Tensor& plane, const Tensor& per_channel);
// Swap the last two axes of a [C,H,W] tensor.
Tensor transpose_hw(const Tensor& a);

// Row-wise log-softmax over the last axis of a [R,K] tensor.
Tensor log_softmax_rows(const Tensor& a);
// Elementwise log(sum_k exp(stack[k])) over same-shape tensors.
Tensor logsumexp_stack(const std::vector<Tensor>& stack);

// Log-pmf of the discrete logistic at integer points z (a constant tensor),
// with tails folded at [lo, hi]. mu/log_s are either [C] (per channel of a
// [C,...] z) or the full shape of z.
Tensor discrete_logistic_log_pmf(const Tensor& z, const Tensor& mu, const Tensor& log_s,
                                 int lo, int hi);

// Reverse-mode accumulation from a scalar loss into every reachable
// parameter's grad buffer. A second call on the same loss is an error.
void backward(const Tensor& loss);

void check_finite(const Tensor& t, const char* what);

}  // namespace nwf
