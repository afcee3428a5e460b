// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include "segobs/tensor.hpp"

namespace segobs {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

enum class LayerKind {
  conv2d,
  batchnorm,
  relu,
  maxpool2x2,
  upsample2x2,
  dropout2d,
  linear_per_pixel,
  softmax,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::upsample2x2: return "upsample2x2";
    case LayerKind::dropout2d: return "dropout2d";
    case LayerKind::linear_per_pixel: return "linear_per_pixel";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// One layer of the stack. Convolutions are fixed 3x3 / stride 1 / pad 1;
/// pooling and upsampling are fixed 2x2.
template <typename S>
struct Layer {
  LayerKind kind;
  std::string name;

  // conv2d: weight (Cout,Cin,3,3); linear_per_pixel: weight (Cout,Cin); bias (Cout)
  Tensor<S> weight;
  Tensor<S> bias;

  // batchnorm
  Tensor<S> bn_scale;   // gamma, (C)
  Tensor<S> bn_shift;   // beta, (C)
  std::vector<S> running_mean;
  std::vector<S> running_var;
  S bn_momentum = S(0.1);
  S bn_eps = S(1e-5);

  // dropout2d
  S drop_p = S(0);

  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> out;
    switch (kind) {
      case LayerKind::conv2d:
      case LayerKind::linear_per_pixel:
        out = {&weight, &bias};
        break;
      case LayerKind::batchnorm:
        out = {&bn_scale, &bn_shift};
        break;
      default:
        break;
    }
    return out;
  }
};

template <typename S>
Layer<S> make_conv2d(std::string name, std::size_t c_in, std::size_t c_out, Rng& rng) {
  Layer<S> l;
  l.kind = LayerKind::conv2d;
  l.name = std::move(name);
  l.weight = Tensor<S>(Shape{c_out, c_in, 3, 3}, S(0), true);
  l.bias = Tensor<S>(Shape{c_out}, S(0), true);
  const double stddev = std::sqrt(2.0 / static_cast<double>(c_in * 9));  // He fan-in
  for (auto& w : l.weight.values()) w = static_cast<S>(rng.normal() * stddev);
  return l;
}

template <typename S>
Layer<S> make_batchnorm(std::string name, std::size_t channels) {
  Layer<S> l;
  l.kind = LayerKind::batchnorm;
  l.name = std::move(name);
  l.bn_scale = Tensor<S>(Shape{channels}, S(1), true);
  l.bn_shift = Tensor<S>(Shape{channels}, S(0), true);
  l.running_mean.assign(channels, S(0));
  l.running_var.assign(channels, S(1));
  return l;
}

template <typename S>
Layer<S> make_relu(std::string name) {
  Layer<S> l;
  l.kind = LayerKind::relu;
  l.name = std::move(name);
  return l;
}

template <typename S>
Layer<S> make_maxpool(std::string name) {
  Layer<S> l;
  l.kind = LayerKind::maxpool2x2;
  l.name = std::move(name);
  return l;
}

template <typename S>
Layer<S> make_upsample(std::string name) {
  Layer<S> l;
  l.kind = LayerKind::upsample2x2;
  l.name = std::move(name);
  return l;
}

template <typename S>
Layer<S> make_dropout2d(std::string name, S p) {
  require(p >= S(0) && p <= S(1), "dropout2d: p must be in [0,1]");
  Layer<S> l;
  l.kind = LayerKind::dropout2d;
  l.name = std::move(name);
  l.drop_p = p;
  return l;
}

template <typename S>
Layer<S> make_linear_per_pixel(std::string name, std::size_t c_in, std::size_t c_out, Rng& rng) {
  Layer<S> l;
  l.kind = LayerKind::linear_per_pixel;
  l.name = std::move(name);
  l.weight = Tensor<S>(Shape{c_out, c_in}, S(0), true);
  l.bias = Tensor<S>(Shape{c_out}, S(0), true);
  const double stddev = std::sqrt(2.0 / static_cast<double>(c_in));
  for (auto& w : l.weight.values()) w = static_cast<S>(rng.normal() * stddev);
  return l;
}

template <typename S>
Layer<S> make_softmax(std::string name) {
  Layer<S> l;
  l.kind = LayerKind::softmax;
  l.name = std::move(name);
  return l;
}

namespace detail {

template <typename S>
void expect_chw(const Layer<S>& l, const Tensor<S>& x) {
  require(x.rank() == 3, "layer " + l.name + " (" + layer_kind_name(l.kind) + "): input must be (C,H,W), got " +
                             shape_str(x.shape()));
}

// im2col for 3x3 / stride 1 / pad 1: (Cin,H,W) -> (Cin*9, H*W)
template <typename S>
void im2col_3x3(const S* in, std::size_t c_in, std::size_t h, std::size_t w, S* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    const S* plane = in + c * hw;
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        S* dst = col + ((c * 3 + (ky + 1)) * 3 + (kx + 1)) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst + y * w, dst + (y + 1) * w, S(0));
            continue;
          }
          const S* src = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + kx;
            dst[y * w + x] = (sx < 0 || sx >= static_cast<long>(w)) ? S(0) : src[sx];
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col_3x3
template <typename S>
void col2im_3x3(const S* col, std::size_t c_in, std::size_t h, std::size_t w, S* in_grad) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    S* plane = in_grad + c * hw;
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        const S* src = col + ((c * 3 + (ky + 1)) * 3 + (kx + 1)) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          S* dst = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + kx;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += src[y * w + x];
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> conv2d_forward(Layer<S>& l, const Tensor<S>& x) {
  expect_chw(l, x);
  const std::size_t c_out = l.weight.dim(0), c_in = l.weight.dim(1);
  require(x.dim(0) == c_in, "layer " + l.name + " (conv2d): expected " + std::to_string(c_in) +
                                " input channels, got " + std::to_string(x.dim(0)));
  const std::size_t h = x.dim(1), w = x.dim(2), hw = h * w, k = c_in * 9;

  auto col = std::make_shared<std::vector<S>>(k * hw);
  im2col_3x3(x.data(), c_in, h, w, col->data());

  std::vector<S> out(c_out * hw);
  {
    ConstMatMap<S> W(l.weight.data(), static_cast<long>(c_out), static_cast<long>(k));
    ConstMatMap<S> C(col->data(), static_cast<long>(k), static_cast<long>(hw));
    MatMap<S> O(out.data(), static_cast<long>(c_out), static_cast<long>(hw));
    O.noalias() = W * C;
  }
  const S* b = l.bias.data();
  for (std::size_t c = 0; c < c_out; ++c) {
    S* row = out.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] += b[c];
  }

  return make_op<S>(Shape{c_out, h, w}, std::move(out), {x, l.weight, l.bias},
                    [hx = x.handle(), hw_ = l.weight.handle(), hb = l.bias.handle(), col, c_out, c_in, h, w](
                        TensorNode<S>& n) {
                      const std::size_t hwp = h * w, k = c_in * 9;
                      // dW = dOut * col^T
                      if (hw_->requires_grad) {
                        hw_->ensure_grad();
                        ConstMatMap<S> dO(n.grad.data(), static_cast<long>(c_out), static_cast<long>(hwp));
                        ConstMatMap<S> C(col->data(), static_cast<long>(k), static_cast<long>(hwp));
                        MatMap<S> dW(hw_->grad.data(), static_cast<long>(c_out), static_cast<long>(k));
                        dW.noalias() += dO * C.transpose();
                      }
                      if (hb->requires_grad) {
                        hb->ensure_grad();
                        for (std::size_t c = 0; c < c_out; ++c) {
                          S acc = S(0);
                          const S* row = n.grad.data() + c * hwp;
                          for (std::size_t i = 0; i < hwp; ++i) acc += row[i];
                          hb->grad[c] += acc;
                        }
                      }
                      if (hx->requires_grad) {
                        hx->ensure_grad();
                        std::vector<S> dcol(k * hwp);
                        ConstMatMap<S> W(hw_->value.data(), static_cast<long>(c_out), static_cast<long>(k));
                        ConstMatMap<S> dO(n.grad.data(), static_cast<long>(c_out), static_cast<long>(hwp));
                        MatMap<S> dC(dcol.data(), static_cast<long>(k), static_cast<long>(hwp));
                        dC.noalias() = W.transpose() * dO;
                        col2im_3x3(dcol.data(), c_in, h, w, hx->grad.data());
                      }
                    });
}

template <typename S>
Tensor<S> linear_per_pixel_forward(Layer<S>& l, const Tensor<S>& x) {
  expect_chw(l, x);
  const std::size_t c_out = l.weight.dim(0), c_in = l.weight.dim(1);
  require(x.dim(0) == c_in, "layer " + l.name + " (linear_per_pixel): expected " + std::to_string(c_in) +
                                " input channels, got " + std::to_string(x.dim(0)));
  const std::size_t h = x.dim(1), w = x.dim(2), hw = h * w;

  std::vector<S> out(c_out * hw);
  {
    ConstMatMap<S> W(l.weight.data(), static_cast<long>(c_out), static_cast<long>(c_in));
    ConstMatMap<S> X(x.data(), static_cast<long>(c_in), static_cast<long>(hw));
    MatMap<S> O(out.data(), static_cast<long>(c_out), static_cast<long>(hw));
    O.noalias() = W * X;
  }
  const S* b = l.bias.data();
  for (std::size_t c = 0; c < c_out; ++c) {
    S* row = out.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] += b[c];
  }

  return make_op<S>(Shape{c_out, h, w}, std::move(out), {x, l.weight, l.bias},
                    [hx = x.handle(), hw_ = l.weight.handle(), hb = l.bias.handle(), c_out, c_in, h, w](
                        TensorNode<S>& n) {
                      const std::size_t hwp = h * w;
                      if (hw_->requires_grad) {
                        hw_->ensure_grad();
                        ConstMatMap<S> dO(n.grad.data(), static_cast<long>(c_out), static_cast<long>(hwp));
                        ConstMatMap<S> X(hx->value.data(), static_cast<long>(c_in), static_cast<long>(hwp));
                        MatMap<S> dW(hw_->grad.data(), static_cast<long>(c_out), static_cast<long>(c_in));
                        dW.noalias() += dO * X.transpose();
                      }
                      if (hb->requires_grad) {
                        hb->ensure_grad();
                        for (std::size_t c = 0; c < c_out; ++c) {
                          S acc = S(0);
                          const S* row = n.grad.data() + c * hwp;
                          for (std::size_t i = 0; i < hwp; ++i) acc += row[i];
                          hb->grad[c] += acc;
                        }
                      }
                      if (hx->requires_grad) {
                        hx->ensure_grad();
                        ConstMatMap<S> W(hw_->value.data(), static_cast<long>(c_out), static_cast<long>(c_in));
                        ConstMatMap<S> dO(n.grad.data(), static_cast<long>(c_out), static_cast<long>(hwp));
                        MatMap<S> dX(hx->grad.data(), static_cast<long>(c_in), static_cast<long>(hwp));
                        dX.noalias() += W.transpose() * dO;
                      }
                    });
}

template <typename S>
Tensor<S> batchnorm_forward(Layer<S>& l, const Tensor<S>& x, bool train_mode, bool update_running) {
  expect_chw(l, x);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  require(c == l.bn_scale.size(), "layer " + l.name + " (batchnorm): expected " +
                                      std::to_string(l.bn_scale.size()) + " channels, got " + std::to_string(c));

  std::vector<S> out(x.size());
  auto mean_c = std::make_shared<std::vector<S>>(c);
  auto inv_std = std::make_shared<std::vector<S>>(c);
  const S* in = x.data();
  const S* gamma = l.bn_scale.data();
  const S* beta = l.bn_shift.data();

  for (std::size_t ch = 0; ch < c; ++ch) {
    const S* plane = in + ch * hw;
    S m, v;
    if (train_mode) {
      double acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      m = static_cast<S>(acc / static_cast<double>(hw));
      double vacc = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = plane[i] - m;
        vacc += d * d;
      }
      v = static_cast<S>(vacc / static_cast<double>(hw));  // biased
      if (update_running) {
        l.running_mean[ch] = (S(1) - l.bn_momentum) * l.running_mean[ch] + l.bn_momentum * m;
        l.running_var[ch] = (S(1) - l.bn_momentum) * l.running_var[ch] + l.bn_momentum * v;
      }
    } else {
      m = l.running_mean[ch];
      v = l.running_var[ch];
    }
    const S istd = S(1) / std::sqrt(v + l.bn_eps);
    (*mean_c)[ch] = m;
    (*inv_std)[ch] = istd;
    S* o = out.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) o[i] = gamma[ch] * (plane[i] - m) * istd + beta[ch];
  }

  return make_op<S>(x.shape(), std::move(out), {x, l.bn_scale, l.bn_shift},
                    [hx = x.handle(), hg = l.bn_scale.handle(), hb = l.bn_shift.handle(), mean_c, inv_std, c, hw,
                     train_mode](TensorNode<S>& n) {
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const S* dy = n.grad.data() + ch * hw;
                        const S* xv = hx->value.data() + ch * hw;
                        const S m = (*mean_c)[ch], istd = (*inv_std)[ch];
                        const S g = hg->value[ch];
                        double sum_dy = 0, sum_dy_xhat = 0;
                        for (std::size_t i = 0; i < hw; ++i) {
                          sum_dy += dy[i];
                          sum_dy_xhat += dy[i] * ((xv[i] - m) * istd);
                        }
                        if (hg->requires_grad) {
                          hg->ensure_grad();
                          hg->grad[ch] += static_cast<S>(sum_dy_xhat);
                        }
                        if (hb->requires_grad) {
                          hb->ensure_grad();
                          hb->grad[ch] += static_cast<S>(sum_dy);
                        }
                        if (hx->requires_grad) {
                          hx->ensure_grad();
                          S* dx = hx->grad.data() + ch * hw;
                          if (train_mode) {
                            const S inv_n = S(1) / static_cast<S>(hw);
                            const S mdy = static_cast<S>(sum_dy) * inv_n;
                            const S mdyx = static_cast<S>(sum_dy_xhat) * inv_n;
                            for (std::size_t i = 0; i < hw; ++i) {
                              const S xhat = (xv[i] - m) * istd;
                              dx[i] += g * istd * (dy[i] - mdy - xhat * mdyx);
                            }
                          } else {
                            for (std::size_t i = 0; i < hw; ++i) dx[i] += g * istd * dy[i];
                          }
                        }
                      }
                    });
}

template <typename S>
Tensor<S> maxpool2x2_forward(Layer<S>& l, const Tensor<S>& x) {
  expect_chw(l, x);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h % 2 == 0 && w % 2 == 0,
          "layer " + l.name + " (maxpool2x2): H and W must be even, got " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<S> out(c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(c * oh * ow);
  const S* in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const S* plane = in + ch * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = (2 * y) * w + 2 * xx;
        std::size_t best = base;
        S bv = plane[base];
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t k = 0; k < 3; ++k) {
          if (plane[cand[k]] > bv) {
            bv = plane[cand[k]];
            best = cand[k];
          }
        }
        out[(ch * oh + y) * ow + xx] = bv;
        (*argmax)[(ch * oh + y) * ow + xx] = static_cast<std::uint32_t>(ch * h * w + best);
      }
    }
  }
  return make_op<S>(Shape{c, oh, ow}, std::move(out), {x},
                    [hx = x.handle(), argmax](TensorNode<S>& n) {
                      if (!hx->requires_grad) return;
                      hx->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i) hx->grad[(*argmax)[i]] += n.grad[i];
                    });
}

template <typename S>
Tensor<S> upsample2x2_forward(Layer<S>& l, const Tensor<S>& x) {
  expect_chw(l, x);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h * 2, ow = w * 2;
  std::vector<S> out(c * oh * ow);
  const S* in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const S* src = in + (ch * h + y / 2) * w;
      S* dst = out.data() + (ch * oh + y) * ow;
      for (std::size_t xx = 0; xx < ow; ++xx) dst[xx] = src[xx / 2];
    }
  }
  return make_op<S>(Shape{c, oh, ow}, std::move(out), {x},
                    [hx = x.handle(), c, h, w](TensorNode<S>& n) {
                      if (!hx->requires_grad) return;
                      hx->ensure_grad();
                      const std::size_t oh = h * 2, ow = w * 2;
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        for (std::size_t y = 0; y < oh; ++y) {
                          const S* g = n.grad.data() + (ch * oh + y) * ow;
                          S* dst = hx->grad.data() + (ch * h + y / 2) * w;
                          for (std::size_t xx = 0; xx < ow; ++xx) dst[xx / 2] += g[xx];
                        }
                      }
                    });
}

template <typename S>
Tensor<S> dropout2d_forward(Layer<S>& l, const Tensor<S>& x, bool active, Rng* rng) {
  expect_chw(l, x);
  if (!active || l.drop_p == S(0)) {
    // identity in deterministic mode (and for p=0); still a graph node
    std::vector<S> out(x.values());
    return make_op<S>(x.shape(), std::move(out), {x}, [hx = x.handle()](TensorNode<S>& n) {
      if (!hx->requires_grad) return;
      hx->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) hx->grad[i] += n.grad[i];
    });
  }
  require(rng != nullptr, "layer " + l.name + " (dropout2d): stochastic mode needs an rng");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto keep_scale = std::make_shared<std::vector<S>>(c);
  const S inv_keep = l.drop_p < S(1) ? S(1) / (S(1) - l.drop_p) : S(0);
  for (std::size_t ch = 0; ch < c; ++ch)
    (*keep_scale)[ch] = rng->bernoulli(static_cast<double>(l.drop_p)) ? S(0) : inv_keep;

  std::vector<S> out(x.size());
  const S* in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const S s = (*keep_scale)[ch];
    const S* src = in + ch * hw;
    S* dst = out.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
  }
  return make_op<S>(x.shape(), std::move(out), {x},
                    [hx = x.handle(), keep_scale, c, hw](TensorNode<S>& n) {
                      if (!hx->requires_grad) return;
                      hx->ensure_grad();
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const S s = (*keep_scale)[ch];
                        if (s == S(0)) continue;
                        const S* g = n.grad.data() + ch * hw;
                        S* dst = hx->grad.data() + ch * hw;
                        for (std::size_t i = 0; i < hw; ++i) dst[i] += g[i] * s;
                      }
                    });
}

template <typename S>
Tensor<S> softmax_forward(Layer<S>& l, const Tensor<S>& x) {
  expect_chw(l, x);
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<S> out(x.size());
  const S* in = x.data();
  for (std::size_t i = 0; i < hw; ++i) {
    S mx = in[i];
    for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, in[ch * hw + i]);
    S denom = S(0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const S e = std::exp(in[ch * hw + i] - mx);
      out[ch * hw + i] = e;
      denom += e;
    }
    const S inv = S(1) / denom;
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + i] *= inv;
  }
  return make_op<S>(x.shape(), std::move(out), {x},
                    [hx = x.handle(), c, hw](TensorNode<S>& n) {
                      if (!hx->requires_grad) return;
                      hx->ensure_grad();
                      for (std::size_t i = 0; i < hw; ++i) {
                        S dot = S(0);
                        for (std::size_t ch = 0; ch < c; ++ch) dot += n.grad[ch * hw + i] * n.value[ch * hw + i];
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const std::size_t k = ch * hw + i;
                          hx->grad[k] += n.value[k] * (n.grad[k] - dot);
                        }
                      }
                    });
}

}  // namespace detail

/// Applies one layer. `train_mode` selects the stochastic/statistics behaviour
/// of the layer kind (batch stats for batchnorm, channel dropout for
/// dropout2d); rng is only consulted by active dropout.
template <typename S>
Tensor<S> forward_layer(Layer<S>& layer, const Tensor<S>& input, bool train_mode, Rng* rng = nullptr,
                        bool update_bn_stats = true) {
  switch (layer.kind) {
    case LayerKind::conv2d: return detail::conv2d_forward(layer, input);
    case LayerKind::linear_per_pixel: return detail::linear_per_pixel_forward(layer, input);
    case LayerKind::batchnorm: return detail::batchnorm_forward(layer, input, train_mode, train_mode && update_bn_stats);
    case LayerKind::relu: return relu_map(input);
    case LayerKind::maxpool2x2: return detail::maxpool2x2_forward(layer, input);
    case LayerKind::upsample2x2: return detail::upsample2x2_forward(layer, input);
    case LayerKind::dropout2d: return detail::dropout2d_forward(layer, input, train_mode, rng);
    case LayerKind::softmax: return detail::softmax_forward(layer, input);
  }
  fail("forward_layer: unknown layer kind");
}

}  // namespace segobs
