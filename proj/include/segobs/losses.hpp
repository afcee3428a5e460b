// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "segobs/tensor.hpp"

namespace segobs {

namespace detail {
template <typename S>
void check_prob_map(const Tensor<S>& p, const char* who) {
  require(p.rank() == 3, std::string(who) + ": expected a (C,H,W) probability map, got " + shape_str(p.shape()));
  const std::size_t c = p.dim(0), hw = p.dim(1) * p.dim(2);
  const S* v = p.data();
  for (std::size_t i = 0; i < hw; ++i) {
    S s = S(0);
    for (std::size_t ch = 0; ch < c; ++ch) s += v[ch * hw + i];
    if (std::abs(static_cast<double>(s) - 1.0) > 1e-4)
      fail(std::string(who) + ": pixel " + std::to_string(i) + " class vector sums to " + std::to_string(s));
  }
}
}  // namespace detail

/// Per-pixel KL(p||q) with an eps floor on both arguments:
///   sum_k p_k * ln((p_k+eps)/(q_k+eps)).
/// Output shape (H,W); gradients flow into q only where q requires them.
template <typename S>
Tensor<S> kl_divergence(const Tensor<S>& p, const Tensor<S>& q, S eps) {
  check_same_shape(p, q, "kl_divergence");
  detail::check_prob_map(p, "kl_divergence(p)");
  detail::check_prob_map(q, "kl_divergence(q)");
  const std::size_t c = p.dim(0), h = p.dim(1), w = p.dim(2), hw = h * w;
  std::vector<S> out(hw, S(0));
  const S* pv = p.data();
  const S* qv = q.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const S* pr = pv + ch * hw;
    const S* qr = qv + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      if (pr[i] > S(0))  // 0 * ln 0 = 0 by convention
        out[i] += pr[i] * (std::log(pr[i] + eps) - std::log(qr[i] + eps));
    }
  }
  return make_op<S>(Shape{h, w}, std::move(out), {p, q},
                    [hp = p.handle(), hq = q.handle(), eps, c, hw](TensorNode<S>& n) {
                      // d/dq_k = -p_k / (q_k + eps); d/dp_k = ln((p_k+eps)/(q_k+eps)) + p_k/(p_k+eps)
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const S* pr = hp->value.data() + ch * hw;
                        const S* qr = hq->value.data() + ch * hw;
                        if (hq->requires_grad) {
                          hq->ensure_grad();
                          S* gq = hq->grad.data() + ch * hw;
                          for (std::size_t i = 0; i < hw; ++i) gq[i] += n.grad[i] * (-pr[i] / (qr[i] + eps));
                        }
                        if (hp->requires_grad) {
                          hp->ensure_grad();
                          S* gp = hp->grad.data() + ch * hw;
                          for (std::size_t i = 0; i < hw; ++i)
                            gp[i] += n.grad[i] * (std::log(pr[i] + eps) - std::log(qr[i] + eps) + pr[i] / (pr[i] + eps));
                        }
                      }
                    });
}

/// Mean of -ln(prob of the true class) over pixels whose label != ignore_index.
template <typename S>
Tensor<S> cross_entropy_loss(const Tensor<S>& probs, std::span<const std::uint8_t> labels,
                             std::uint8_t ignore_index) {
  require(probs.rank() == 3, "cross_entropy_loss: expected (C,H,W), got " + shape_str(probs.shape()));
  const std::size_t c = probs.dim(0), hw = probs.dim(1) * probs.dim(2);
  require(labels.size() == hw, "cross_entropy_loss: label map size mismatch");
  constexpr S floor = S(1e-12);  // guards ln against exact-zero probabilities

  std::size_t counted = 0;
  double acc = 0;
  const S* pv = probs.data();
  for (std::size_t i = 0; i < hw; ++i) {
    const std::uint8_t y = labels[i];
    if (y == ignore_index) continue;
    require(y < c, "cross_entropy_loss: label " + std::to_string(int(y)) + " out of range for C=" + std::to_string(c));
    acc -= std::log(static_cast<double>(std::max(pv[y * hw + i], floor)));
    ++counted;
  }
  require(counted > 0, "cross_entropy_loss: every pixel is ignored");
  std::vector<S> out{static_cast<S>(acc / static_cast<double>(counted))};

  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return make_op<S>(Shape{1}, std::move(out), {probs},
                    [hp = probs.handle(), lab = std::move(lab), ignore_index, c, hw, counted](TensorNode<S>& n) {
                      if (!hp->requires_grad) return;
                      hp->ensure_grad();
                      const S g = n.grad[0] / static_cast<S>(counted);
                      for (std::size_t i = 0; i < hw; ++i) {
                        const std::uint8_t y = lab[i];
                        if (y == ignore_index) continue;
                        const S p = std::max(hp->value[y * hw + i], S(1e-12));
                        hp->grad[y * hw + i] -= g / p;
                      }
                    });
}

/// Per-pixel Shannon entropy of a (C,H,W) probability map, in nats. No grad.
template <typename S>
std::vector<S> entropy_map(const Tensor<S>& probs, S eps = S(1e-12)) {
  require(probs.rank() == 3, "entropy_map: expected (C,H,W)");
  const std::size_t c = probs.dim(0), hw = probs.dim(1) * probs.dim(2);
  std::vector<S> out(hw, S(0));
  const S* pv = probs.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const S* row = pv + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const S p = row[i];
      if (p > eps) out[i] -= p * std::log(p);
    }
  }
  return out;
}

}  // namespace segobs
