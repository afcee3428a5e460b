// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "segobs/tensor.hpp"

namespace segobs {

/// Classic-momentum SGD with weight decay folded into the gradient:
///   v <- mu*v + g + wd*w;  w <- w - lr*v
template <typename S>
struct OptimizerState {
  S lr;
  S momentum = S(0.9);
  S weight_decay = S(5e-4);
  long epoch = 0;
  std::vector<std::vector<S>> velocity;  // aligned with the parameter list

  OptimizerState(S lr_, S momentum_, S weight_decay_) : lr(lr_), momentum(momentum_), weight_decay(weight_decay_) {
    require(lr > S(0), "OptimizerState: learning rate must be positive");
    require(momentum >= S(0) && momentum < S(1), "OptimizerState: momentum must be in [0,1)");
    require(weight_decay >= S(0), "OptimizerState: weight decay must be non-negative");
  }
};

/// Halve the base rate after epochs 20 and 40.
inline double lr_schedule(double base_lr, long epoch) {
  require(epoch >= 0, "lr_schedule: epoch must be >= 0");
  if (epoch < 20) return base_lr;
  if (epoch < 40) return base_lr / 2.0;
  return base_lr / 4.0;
}

template <typename S>
void sgd_step(OptimizerState<S>& state, std::vector<Tensor<S>*>& params) {
  if (state.velocity.empty()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) state.velocity[i].assign(params[i]->size(), S(0));
  }
  require(state.velocity.size() == params.size(), "sgd_step: parameter list changed size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = *params[i];
    if (!p.has_grad()) continue;  // untouched by this loss
    require(state.velocity[i].size() == p.size(), "sgd_step: parameter " + std::to_string(i) + " changed shape");
    auto& v = state.velocity[i];
    auto& w = p.values();
    const auto& g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const S gj = g[j];
      if (!std::isfinite(static_cast<double>(gj)))
        fail("sgd_step: non-finite gradient in parameter " + std::to_string(i));
      v[j] = state.momentum * v[j] + gj + state.weight_decay * w[j];
      w[j] -= state.lr * v[j];
    }
  }
}

}  // namespace segobs
