// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "segobs/common.hpp"

namespace segobs {

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until needed; same length as value once allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  std::function<void(TensorNode<S>&)> backprop;  // scatters this->grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

/// RAII switch that disables graph recording on this thread. Forwards run
/// inside it produce plain constants (used for inference and detached taps).
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Dense row-major tensor handle with an optional gradient buffer.
/// Copies share storage (the node); clone() makes an independent leaf.
template <typename S = float>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;

  explicit Tensor(Shape shape, S fill = S(0), bool requires_grad = false) {
    require(!shape.empty(), "Tensor: empty shape");
    n_ = std::make_shared<TensorNode<S>>();
    n_->shape = std::move(shape);
    n_->value.assign(numel(n_->shape), fill);
    n_->requires_grad = requires_grad;
  }

  static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
    require(!shape.empty(), "Tensor: empty shape");
    require(numel(shape) == data.size(),
            "Tensor: data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Tensor t;
    t.n_ = std::make_shared<TensorNode<S>>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S v) { return Tensor(Shape{1}, v); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return node().shape; }
  std::size_t size() const { return node().value.size(); }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t i) const { return node().shape.at(i); }

  S* data() { return node().value.data(); }
  const S* data() const { return node().value.data(); }
  std::vector<S>& values() { return node().value; }
  const std::vector<S>& values() const { return node().value; }

  S item() const {
    require(size() == 1, "Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
    return node().value[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return !node().grad.empty(); }
  const S* grad_data() const { return node().grad.data(); }
  const std::vector<S>& grad() const { return node().grad; }

  void zero_grad() {
    if (node().requires_grad) node().grad.assign(size(), S(0));
  }

  /// Deep copy with no graph history.
  Tensor clone() const {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<S>>();
    t.n_->shape = node().shape;
    t.n_->value = node().value;
    t.n_->requires_grad = node().requires_grad;
    return t;
  }

  /// Constant copy of the value (no grad, no history).
  Tensor detached() const {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<S>>();
    t.n_->shape = node().shape;
    t.n_->value = node().value;
    return t;
  }

  TensorNode<S>& node() const {
    require(static_cast<bool>(n_), "Tensor: undefined");
    return *n_;
  }
  const std::shared_ptr<TensorNode<S>>& handle() const { return n_; }

 private:
  std::shared_ptr<TensorNode<S>> n_;
};

/// Builds an op result node. Graph history (parents + backprop) is recorded
/// only when grads are enabled and some parent needs them.
template <typename S, typename Backprop>
Tensor<S> make_op(Shape shape, std::vector<S> value, std::initializer_list<Tensor<S>> parents, Backprop&& bp) {
  Tensor<S> out = Tensor<S>::from_data(std::move(shape), std::move(value));
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    auto& n = out.node();
    n.requires_grad = true;
    for (const auto& p : parents) n.parents.push_back(p.handle());
    n.backprop = std::forward<Backprop>(bp);
  }
  return out;
}

template <typename S>
void accumulate_grad(const std::shared_ptr<TensorNode<S>>& node, std::size_t i, S v) {
  if (node->requires_grad) {
    node->ensure_grad();
    node->grad[i] += v;
  }
}

// ---- elementwise / reduction ops -------------------------------------------

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  std::vector<S> v(a.size());
  const S* pa = a.data();
  const S* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + pb[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [ha = a.handle(), hb = b.handle()](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      accumulate_grad(ha, i, n.grad[i]);
      accumulate_grad(hb, i, n.grad[i]);
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "sub");
  std::vector<S> v(a.size());
  const S* pa = a.data();
  const S* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] - pb[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [ha = a.handle(), hb = b.handle()](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      accumulate_grad(ha, i, n.grad[i]);
      accumulate_grad(hb, i, -n.grad[i]);
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  std::vector<S> v(a.size());
  const S* pa = a.data();
  const S* pb = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * pb[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [ha = a.handle(), hb = b.handle()](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      accumulate_grad(ha, i, n.grad[i] * hb->value[i]);
      accumulate_grad(hb, i, n.grad[i] * ha->value[i]);
    }
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S k) {
  std::vector<S> v(a.size());
  const S* pa = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * k;
  return make_op<S>(a.shape(), std::move(v), {a}, [ha = a.handle(), k](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) accumulate_grad(ha, i, n.grad[i] * k);
  });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S k) {
  std::vector<S> v(a.size());
  const S* pa = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + k;
  return make_op<S>(a.shape(), std::move(v), {a}, [ha = a.handle()](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) accumulate_grad(ha, i, n.grad[i]);
  });
}

/// Elementwise max(x, 0).
template <typename S>
Tensor<S> relu_map(const Tensor<S>& a) {
  std::vector<S> v(a.size());
  const S* pa = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] > S(0) ? pa[i] : S(0);
  return make_op<S>(a.shape(), std::move(v), {a}, [ha = a.handle()](TensorNode<S>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (ha->value[i] > S(0)) accumulate_grad(ha, i, n.grad[i]);
    }
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = S(0);
  const S* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
  std::vector<S> v{acc};
  return make_op<S>(Shape{1}, std::move(v), {a}, [ha = a.handle()](TensorNode<S>& n) {
    const S g = n.grad[0];
    for (std::size_t i = 0; i < ha->value.size(); ++i) accumulate_grad(ha, i, g);
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  const S inv = S(1) / static_cast<S>(a.size());
  S acc = S(0);
  const S* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
  std::vector<S> v{acc * inv};
  return make_op<S>(Shape{1}, std::move(v), {a}, [ha = a.handle(), inv](TensorNode<S>& n) {
    const S g = n.grad[0] * inv;
    for (std::size_t i = 0; i < ha->value.size(); ++i) accumulate_grad(ha, i, g);
  });
}

// ---- reverse pass ------------------------------------------------------------

/// Runs reverse-mode accumulation from a scalar loss. Every parameter
/// reachable from the loss gets (or accumulates into) a grad buffer;
/// unreachable tensors are untouched.
template <typename S>
void backward(const Tensor<S>& loss) {
  require(loss.size() == 1, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  require(std::isfinite(static_cast<double>(loss.item())), "backward: loss is not finite");
  if (!loss.requires_grad()) return;  // nothing reachable requires grad

  // Iterative postorder DFS over parent edges; reversed order is topological
  // for the backward sweep.
  std::vector<TensorNode<S>*> order;
  std::unordered_set<TensorNode<S>*> seen;
  struct Frame {
    TensorNode<S>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({&loss.node(), 0});
  seen.insert(&loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode<S>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node().ensure_grad();
  loss.node().grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

template <typename S>
bool all_finite(const std::vector<S>& v) {
  for (S x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace segobs
