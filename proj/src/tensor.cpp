#include "nwf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace nwf {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

void TensorImpl::accumulate(const std::vector<float>& g) {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void TensorImpl::accumulate_at(size_t i, float g) {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  grad[i] += g;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

namespace {

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d >= 0, Errc::contract, "negative tensor extent");
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::shared_ptr<detail::TensorImpl> make_impl(std::vector<int> shape, std::vector<float> value) {
  require(shape_numel(shape) == value.size(), Errc::contract,
          "tensor shape does not match data length");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(value);
  return impl;
}

}  // namespace

Tensor make_node(std::vector<int> shape, std::vector<float> value, std::vector<Tensor> parents,
                 std::function<void(detail::TensorImpl&)> backward_fn) {
  auto impl = make_impl(std::move(shape), std::move(value));
  bool track = detail::grad_enabled();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  size_t n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float v) {
  size_t n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<float>(n, v));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<float> values) {
  return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::param(std::vector<int> shape, std::vector<float> values) {
  Tensor t = from_values(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

float Tensor::item() const {
  require(numel() == 1, Errc::contract, "item() on non-scalar tensor");
  return impl_->value[0];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone_detached() const {
  return Tensor::from_values(impl_->shape, impl_->value);
}

void check_finite(const Tensor& t, const char* what) {
  for (float v : t.values())
    require(std::isfinite(v), Errc::numeric, std::string("non-finite value in ") + what);
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), Errc::contract, std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    self.parents[0].impl()->accumulate(self.grad);
    self.parents[1].impl()->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    self.parents[0].impl()->accumulate(self.grad);
    auto* bi = self.parents[1].impl();
    if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0f);
    for (size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    auto* bi = self.parents[1].impl();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      ai->accumulate_at(i, self.grad[i] * bi->value[i]);
      bi->accumulate_at(i, self.grad[i] * ai->value[i]);
    }
  });
}

Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
  return make_node(a.shape(), std::move(out), {a}, [](detail::TensorImpl& self) {
    self.parents[0].impl()->accumulate(self.grad);
  });
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return make_node(a.shape(), std::move(out), {a}, [s](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0f);
    for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * s;
  });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
  return make_node(a.shape(), std::move(out), {a}, [](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0f);
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (ai->value[i] > 0.0f) ai->grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  float acc = 0.0f;
  for (float v : a.values()) acc += v;
  return make_node({1}, {acc}, {a}, [](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0f);
    for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += self.grad[0];
  });
}

Tensor round_st(const Tensor& a) {
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::floor(av[i] + 0.5f);
  return make_node(a.shape(), std::move(out), {a}, [](detail::TensorImpl& self) {
    self.parents[0].impl()->accumulate(self.grad);  // straight-through
  });
}

// ---------------------------------------------------------------------------
// structure ops

Tensor map_gather(const Tensor& a, std::vector<int> out_shape, std::vector<int> index) {
  require(shape_numel(out_shape) == index.size(), Errc::contract, "map_gather: bad index size");
  std::vector<float> out(index.size());
  const auto& av = a.values();
  for (size_t i = 0; i < index.size(); ++i) out[i] = av[static_cast<size_t>(index[i])];
  auto idx = std::make_shared<std::vector<int>>(std::move(index));
  return make_node(std::move(out_shape), std::move(out), {a}, [idx](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0f);
    for (size_t i = 0; i < idx->size(); ++i) ai->grad[(*idx)[i]] += self.grad[i];
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), Errc::contract, "concat_channels: empty input");
  int rank = parts[0].rank();
  require(rank >= 2, Errc::contract, "concat_channels: rank must be >= 2");
  size_t plane = parts[0].numel() / static_cast<size_t>(parts[0].dim(0));
  int channels = 0;
  for (const auto& p : parts) {
    require(p.rank() == rank, Errc::contract, "concat_channels: rank mismatch");
    require(p.numel() / static_cast<size_t>(p.dim(0)) == plane, Errc::contract,
            "concat_channels: spatial shape mismatch");
    channels += p.dim(0);
  }
  std::vector<int> shape = parts[0].shape();
  shape[0] = channels;
  std::vector<float> out;
  out.reserve(plane * channels);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_node(std::move(shape), std::move(out), parts, [](detail::TensorImpl& self) {
    size_t off = 0;
    for (auto& parent : self.parents) {
      auto* pi = parent.impl();
      if (pi->grad.empty()) pi->grad.assign(pi->value.size(), 0.0f);
      for (size_t i = 0; i < pi->value.size(); ++i) pi->grad[i] += self.grad[off + i];
      off += pi->value.size();
    }
  });
}

Tensor broadcast_add_channel(const Tensor& plane, const Tensor& per_channel) {
  require(plane.rank() >= 1 && per_channel.rank() == 1, Errc::contract,
          "broadcast_add_channel: bad ranks");
  int c = plane.dim(0);
  require(per_channel.dim(0) == c, Errc::contract, "broadcast_add_channel: channel mismatch");
  size_t stride = plane.numel() / static_cast<size_t>(c);
  std::vector<float> out(plane.numel());
  const auto& pv = plane.values();
  const auto& cv = per_channel.values();
  for (int ch = 0; ch < c; ++ch)
    for (size_t i = 0; i < stride; ++i)
      out[ch * stride + i] = pv[ch * stride + i] + cv[ch];
  return make_node(plane.shape(), std::move(out), {plane, per_channel},
                   [c, stride](detail::TensorImpl& self) {
                     self.parents[0].impl()->accumulate(self.grad);
                     auto* ci = self.parents[1].impl();
                     if (ci->grad.empty()) ci->grad.assign(ci->value.size(), 0.0f);
                     for (int ch = 0; ch < c; ++ch) {
                       float acc = 0.0f;
                       for (size_t i = 0; i < stride; ++i) acc += self.grad[ch * stride + i];
                       ci->grad[ch] += acc;
                     }
                   });
}

Tensor transpose_hw(const Tensor& a) {
  require(a.rank() == 3, Errc::contract, "transpose_hw: expects [C,H,W]");
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<int> index(a.numel());
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) index[k++] = (ch * h + y) * w + x;
  return map_gather(a, {c, w, h}, std::move(index));
}

// ---------------------------------------------------------------------------
// probability ops

Tensor log_softmax_rows(const Tensor& a) {
  require(a.rank() == 2, Errc::contract, "log_softmax_rows: expects [R,K]");
  int r = a.dim(0), k = a.dim(1);
  std::vector<float> out(a.numel());
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    float mx = av[i * k];
    for (int j = 1; j < k; ++j) mx = std::max(mx, av[i * k + j]);
    float s = 0.0f;
    for (int j = 0; j < k; ++j) s += std::exp(av[i * k + j] - mx);
    float lse = mx + std::log(s);
    for (int j = 0; j < k; ++j) out[i * k + j] = av[i * k + j] - lse;
  }
  return make_node(a.shape(), std::move(out), {a}, [r, k](detail::TensorImpl& self) {
    auto* ai = self.parents[0].impl();
    if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0f);
    for (int i = 0; i < r; ++i) {
      float gsum = 0.0f;
      for (int j = 0; j < k; ++j) gsum += self.grad[i * k + j];
      for (int j = 0; j < k; ++j) {
        float sm = std::exp(self.value[i * k + j]);
        ai->grad[i * k + j] += self.grad[i * k + j] - sm * gsum;
      }
    }
  });
}

Tensor logsumexp_stack(const std::vector<Tensor>& stack) {
  require(!stack.empty(), Errc::contract, "logsumexp_stack: empty stack");
  size_t n = stack[0].numel();
  for (const auto& t : stack)
    require(t.shape() == stack[0].shape(), Errc::contract, "logsumexp_stack: shape mismatch");
  size_t k = stack.size();
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    float mx = stack[0].values()[i];
    for (size_t j = 1; j < k; ++j) mx = std::max(mx, stack[j].values()[i]);
    float s = 0.0f;
    for (size_t j = 0; j < k; ++j) s += std::exp(stack[j].values()[i] - mx);
    out[i] = mx + std::log(s);
  }
  return make_node(stack[0].shape(), std::move(out), stack, [k](detail::TensorImpl& self) {
    for (size_t j = 0; j < k; ++j) {
      auto* pi = self.parents[j].impl();
      if (pi->grad.empty()) pi->grad.assign(pi->value.size(), 0.0f);
      for (size_t i = 0; i < self.grad.size(); ++i)
        pi->grad[i] += self.grad[i] * std::exp(pi->value[i] - self.value[i]);
    }
  });
}

namespace {

inline float sigmoidf(float x) {
  if (x >= 0.0f) {
    float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(x);
  return e / (1.0f + e);
}

inline float log_sigmoidf(float x) {
  // log sigma(x) = -softplus(-x)
  if (x >= 0.0f) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

constexpr float kPmfFloor = 1e-5f;

}  // namespace

Tensor discrete_logistic_log_pmf(const Tensor& z, const Tensor& mu, const Tensor& log_s,
                                 int lo, int hi) {
  size_t n = z.numel();
  int c = z.dim(0);
  size_t stride = n / static_cast<size_t>(c);
  bool per_channel = mu.numel() == static_cast<size_t>(c) && n != static_cast<size_t>(c);
  if (!per_channel)
    require(mu.numel() == n, Errc::contract, "discrete_logistic_log_pmf: mu shape");
  require(mu.shape() == log_s.shape(), Errc::contract,
          "discrete_logistic_log_pmf: mu/log_s shape mismatch");

  auto pidx = [per_channel, stride](size_t i) {
    return per_channel ? i / stride : i;
  };

  std::vector<float> out(n);
  const auto& zv = z.values();
  const auto& mv = mu.values();
  const auto& sv = log_s.values();
  for (size_t i = 0; i < n; ++i) {
    size_t p = pidx(i);
    float zi = zv[i];
    float inv_s = std::exp(-sv[p]);
    float a = (zi - 0.5f - mv[p]) * inv_s;
    float b = (zi + 0.5f - mv[p]) * inv_s;
    if (zi <= static_cast<float>(lo)) {
      out[i] = log_sigmoidf(b);
    } else if (zi >= static_cast<float>(hi)) {
      out[i] = log_sigmoidf(-a);
    } else {
      float delta = sigmoidf(b) - sigmoidf(a);
      if (delta > kPmfFloor) {
        out[i] = std::log(delta);
      } else {
        // bin-width approximation via the logistic pdf at the midpoint
        float cmid = (zi - mv[p]) * inv_s;
        float ac = std::fabs(cmid);
        out[i] = -ac - 2.0f * std::log1p(std::exp(-ac)) - sv[p];
      }
    }
  }

  auto zi_keep = z;  // constant parent, kept for values in backward
  return make_node(z.shape(), std::move(out), {mu, log_s, zi_keep},
                   [lo, hi, n, pidx](detail::TensorImpl& self) {
                     auto* mi = self.parents[0].impl();
                     auto* si = self.parents[1].impl();
                     auto* zi = self.parents[2].impl();
                     if (mi->grad.empty()) mi->grad.assign(mi->value.size(), 0.0f);
                     if (si->grad.empty()) si->grad.assign(si->value.size(), 0.0f);
                     for (size_t i = 0; i < n; ++i) {
                       size_t p = pidx(i);
                       float g = self.grad[i];
                       if (g == 0.0f) continue;
                       float zval = zi->value[i];
                       float inv_s = std::exp(-si->value[p]);
                       float a = (zval - 0.5f - mi->value[p]) * inv_s;
                       float b = (zval + 0.5f - mi->value[p]) * inv_s;
                       float dmu, dls;
                       if (zval <= static_cast<float>(lo)) {
                         float sb = sigmoidf(-b);
                         dmu = -inv_s * sb;
                         dls = -b * sb;
                       } else if (zval >= static_cast<float>(hi)) {
                         float sa = sigmoidf(a);
                         dmu = inv_s * sa;
                         dls = a * sa;
                       } else {
                         float sig_a = sigmoidf(a);
                         float sig_b = sigmoidf(b);
                         float delta = sig_b - sig_a;
                         if (delta > kPmfFloor) {
                           float da = sig_a * (1.0f - sig_a);
                           float db = sig_b * (1.0f - sig_b);
                           dmu = inv_s * (da - db) / delta;
                           dls = (a * da - b * db) / delta;
                         } else {
                           float cmid = (zval - mi->value[p]) * inv_s;
                           float t = 1.0f - 2.0f * sigmoidf(cmid);
                           dmu = -t * inv_s;
                           dls = -t * cmid - 1.0f;
                         }
                       }
                       mi->grad[p] += g * dmu;
                       si->grad[p] += g * dls;
                     }
                   });
}

// ---------------------------------------------------------------------------
// backward

void backward(const Tensor& loss) {
  require(loss.numel() == 1, Errc::contract, "backward: loss must be scalar");
  auto* root = loss.impl();
  require(!root->backward_done, Errc::contract, "backward: called twice without reset");
  root->backward_done = true;
  require(std::isfinite(loss.item()), Errc::numeric, "backward: non-finite loss");

  // Iterative DFS postorder; reversed it gives a topological order.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  struct Frame {
    detail::TensorImpl* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      detail::TensorImpl* child = f.node->parents[f.next_child++].impl();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace nwf
