// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>

#include "segobs/layers.hpp"
#include "segobs/losses.hpp"

namespace segobs {

/// Geometry of the five-stage encoder/decoder. Stage block counts (2,2,3,3,3)
/// and the dropout/tap placement mirror the reference topology; widths and
/// image size are scaled down for CPU training.
struct ArchConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 6;  // class 0 is void
  std::vector<std::size_t> widths = {8, 16, 32, 64, 64};
  double dropout_p = 0.5;

  void validate() const {
    require(height % 32 == 0 && height > 0, "ArchConfig: height must be a positive multiple of 32, got " +
                                                std::to_string(height));
    require(width % 32 == 0 && width > 0,
            "ArchConfig: width must be a positive multiple of 32, got " + std::to_string(width));
    require(num_classes >= 2, "ArchConfig: need at least 2 classes");
    require(widths.size() == 5, "ArchConfig: exactly 5 stage widths required");
    for (auto w : widths) require(w > 0, "ArchConfig: stage widths must be positive");
    require(dropout_p >= 0.0 && dropout_p <= 1.0, "ArchConfig: dropout_p must be in [0,1]");
  }

  bool operator==(const ArchConfig& o) const {
    return height == o.height && width == o.width && num_classes == o.num_classes && widths == o.widths &&
           dropout_p == o.dropout_p;
  }
};

/// Forward switches. Batchnorm statistics follow `bn_train`; dropout follows
/// `stochastic`. MC-dropout inference wants {bn_train=false, stochastic=true}.
struct ForwardOpts {
  bool bn_train = false;
  bool stochastic = false;
  bool update_bn_stats = true;

  static ForwardOpts train() { return {true, true, true}; }
  static ForwardOpts eval() { return {false, false, false}; }
  static ForwardOpts mc_sample() { return {false, true, false}; }
};

inline constexpr std::size_t kStageBlocks[5] = {2, 2, 3, 3, 3};  // per encoder stage; decoder mirrors
inline constexpr bool kStageDropout[5] = {false, false, true, true, true};

/// Encoder/decoder stack with named activation taps after each stage's final
/// conv block. Serves as the segmentation target and the distillation student.
template <typename S = float>
struct SegModel {
  ArchConfig cfg;
  std::vector<Layer<S>> layers;
  std::vector<std::size_t> tap_layers;   // indices into `layers` (the stage-final relu)
  std::vector<std::string> tap_names;    // down1..down5, up5..up1

  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> out;
    for (auto& l : layers)
      for (auto* p : l.parameters()) out.push_back(p);
    return out;
  }

  /// Stable (name, tensor) listing of all persistent state, including
  /// batchnorm running statistics.
  std::vector<std::pair<std::string, std::vector<S>*>> named_state() {
    std::vector<std::pair<std::string, std::vector<S>*>> out;
    for (auto& l : layers) {
      switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::linear_per_pixel:
          out.emplace_back(l.name + ".weight", &l.weight.values());
          out.emplace_back(l.name + ".bias", &l.bias.values());
          break;
        case LayerKind::batchnorm:
          out.emplace_back(l.name + ".scale", &l.bn_scale.values());
          out.emplace_back(l.name + ".shift", &l.bn_shift.values());
          out.emplace_back(l.name + ".running_mean", &l.running_mean);
          out.emplace_back(l.name + ".running_var", &l.running_var);
          break;
        default:
          break;
      }
    }
    return out;
  }

  std::vector<std::pair<std::string, Shape>> state_shapes() {
    std::vector<std::pair<std::string, Shape>> out;
    for (auto& l : layers) {
      switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::linear_per_pixel:
          out.emplace_back(l.name + ".weight", l.weight.shape());
          out.emplace_back(l.name + ".bias", l.bias.shape());
          break;
        case LayerKind::batchnorm: {
          const Shape c{l.bn_scale.dim(0)};
          out.emplace_back(l.name + ".scale", c);
          out.emplace_back(l.name + ".shift", c);
          out.emplace_back(l.name + ".running_mean", c);
          out.emplace_back(l.name + ".running_var", c);
          break;
        }
        default:
          break;
      }
    }
    return out;
  }

  Tensor<S> forward(const Tensor<S>& image, const ForwardOpts& opts, Rng* rng = nullptr,
                    std::vector<Tensor<S>>* taps_out = nullptr) {
    require(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == cfg.height && image.dim(2) == cfg.width,
            "SegModel::forward: expected image (3," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) +
                "), got " + shape_str(image.shape()));
    Tensor<S> x = image;
    std::size_t next_tap = 0;
    if (taps_out) taps_out->clear();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Layer<S>& l = layers[i];
      const bool train_flag = (l.kind == LayerKind::dropout2d) ? opts.stochastic : opts.bn_train;
      x = forward_layer(l, x, train_flag, rng, opts.update_bn_stats);
      if (taps_out && next_tap < tap_layers.size() && tap_layers[next_tap] == i) {
        taps_out->push_back(x);
        ++next_tap;
      }
    }
    return x;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

namespace detail {

/// Appends conv+bn+relu; returns the index of the relu layer.
template <typename S>
std::size_t append_conv_block(std::vector<Layer<S>>& layers, const std::string& name, std::size_t c_in,
                              std::size_t c_out, Rng& rng) {
  layers.push_back(make_conv2d<S>(name + ".conv", c_in, c_out, rng));
  layers.push_back(make_batchnorm<S>(name + ".bn", c_out));
  layers.push_back(make_relu<S>(name + ".relu"));
  return layers.size() - 1;
}

template <typename S>
void build_stack(SegModel<S>& m, Rng& rng) {
  const auto& w = m.cfg.widths;
  const std::size_t C = m.cfg.num_classes;
  const S p = static_cast<S>(m.cfg.dropout_p);

  // encoder
  std::size_t c_prev = 3;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::string stage = "down" + std::to_string(s + 1);
    std::size_t tap = 0;
    for (std::size_t b = 0; b < kStageBlocks[s]; ++b) {
      const std::size_t c_in = (b == 0) ? c_prev : w[s];
      tap = append_conv_block(m.layers, stage + ".b" + std::to_string(b), c_in, w[s], rng);
    }
    m.tap_layers.push_back(tap);
    m.tap_names.push_back(stage);
    m.layers.push_back(make_maxpool<S>(stage + ".pool"));
    if (kStageDropout[s]) m.layers.push_back(make_dropout2d<S>(stage + ".drop", p));
    c_prev = w[s];
  }

  // decoder; stage s final block narrows to the next width down (class count at up1)
  for (std::size_t s = 5; s-- > 0;) {
    const std::string stage = "up" + std::to_string(s + 1);
    const std::size_t w_out = (s == 0) ? C : w[s - 1];
    m.layers.push_back(make_upsample<S>(stage + ".upsample"));
    std::size_t tap = 0;
    for (std::size_t b = 0; b < kStageBlocks[s]; ++b) {
      const bool last = (b + 1 == kStageBlocks[s]);
      tap = append_conv_block(m.layers, stage + ".b" + std::to_string(b), c_prev, last ? w_out : c_prev, rng);
      if (last) c_prev = w_out;
    }
    m.tap_layers.push_back(tap);
    m.tap_names.push_back(stage);
    if (kStageDropout[s]) m.layers.push_back(make_dropout2d<S>(stage + ".drop", p));
  }

  m.layers.push_back(make_linear_per_pixel<S>("head.linear", C, C, rng));
  m.layers.push_back(make_softmax<S>("head.softmax"));
}

}  // namespace detail

template <typename S = float>
SegModel<S> build_target(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  SegModel<S> m;
  m.cfg = cfg;
  detail::build_stack(m, rng);
  return m;
}

/// Deterministic-or-stochastic forward that also returns the 10 stage taps
/// in architectural order.
template <typename S>
std::pair<Tensor<S>, std::vector<Tensor<S>>> forward_with_taps(SegModel<S>& model, const Tensor<S>& image,
                                                               bool stochastic, Rng* rng = nullptr) {
  std::vector<Tensor<S>> taps;
  ForwardOpts opts = ForwardOpts::eval();
  opts.stochastic = stochastic;
  Tensor<S> probs = model.forward(image, opts, rng, &taps);
  return {std::move(probs), std::move(taps)};
}

/// Arithmetic mean of T stochastic forward passes (dropout active, batchnorm
/// frozen on running statistics). Runs without graph recording.
template <typename S>
Tensor<S> mc_dropout_mean(SegModel<S>& model, const Tensor<S>& image, std::size_t t_passes, Rng& rng) {
  require(t_passes >= 1, "mc_dropout_mean: T must be >= 1");
  NoGradGuard ng;
  std::vector<double> acc;
  Shape shape;
  for (std::size_t t = 0; t < t_passes; ++t) {
    Tensor<S> probs = model.forward(image, ForwardOpts::mc_sample(), &rng);
    if (t == 0) {
      shape = probs.shape();
      acc.assign(probs.size(), 0.0);
    }
    const S* v = probs.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(v[i]);
  }
  std::vector<S> meanv(acc.size());
  const double inv = 1.0 / static_cast<double>(t_passes);
  for (std::size_t i = 0; i < acc.size(); ++i) meanv[i] = static_cast<S>(acc[i] * inv);
  return Tensor<S>::from_data(std::move(shape), std::move(meanv));
}

/// The observer: a clone of the target's stack whose stage activations
/// receive the target's tap activations additively, with a fresh
/// identity-initialised per-pixel linear head.
template <typename S = float>
struct ObserverModel {
  SegModel<S> stack;

  std::vector<Tensor<S>*> parameters() { return stack.parameters(); }
  void zero_grad() { stack.zero_grad(); }
};

template <typename S>
ObserverModel<S> build_observer(const ArchConfig& cfg, SegModel<S>& target) {
  cfg.validate();
  require(cfg == target.cfg, "build_observer: config does not match the target's");
  ObserverModel<S> obs;
  obs.stack.cfg = cfg;
  Rng scratch(0);  // weights are overwritten by the copy below
  detail::build_stack(obs.stack, scratch);

  auto src = target.named_state();
  auto dst = obs.stack.named_state();
  require(src.size() == dst.size(), "build_observer: state mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    require(src[i].first == dst[i].first && src[i].second->size() == dst[i].second->size(),
            "build_observer: state entry mismatch at " + src[i].first);
    *dst[i].second = *src[i].second;
  }

  // fresh head: identity map, zero bias
  for (auto& l : obs.stack.layers) {
    if (l.kind == LayerKind::linear_per_pixel) {
      const std::size_t C = l.weight.dim(0);
      std::fill(l.weight.values().begin(), l.weight.values().end(), S(0));
      for (std::size_t c = 0; c < C; ++c) l.weight.values()[c * C + c] = S(1);
      std::fill(l.bias.values().begin(), l.bias.values().end(), S(0));
    }
  }
  return obs;
}

/// Observer forward with tap injection. Taps must come from the paired target
/// on the same image; they are treated as constants (no gradient flows back).
template <typename S>
Tensor<S> observer_forward(ObserverModel<S>& obs, const Tensor<S>& image, const std::vector<Tensor<S>>& taps,
                           const ForwardOpts& opts = ForwardOpts::eval(), Rng* rng = nullptr) {
  SegModel<S>& m = obs.stack;
  require(taps.size() == m.tap_layers.size(), "observer_forward: expected " + std::to_string(m.tap_layers.size()) +
                                                  " taps, got " + std::to_string(taps.size()));
  require(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == m.cfg.height && image.dim(2) == m.cfg.width,
          "observer_forward: bad image shape " + shape_str(image.shape()));

  Tensor<S> x = image;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    Layer<S>& l = m.layers[i];
    const bool train_flag = (l.kind == LayerKind::dropout2d) ? opts.stochastic : opts.bn_train;
    x = forward_layer(l, x, train_flag, rng, opts.update_bn_stats);
    if (next_tap < m.tap_layers.size() && m.tap_layers[next_tap] == i) {
      const Tensor<S>& tap = taps[next_tap];
      require(tap.shape() == x.shape(), "observer_forward: tap " + m.tap_names[next_tap] + " shape " +
                                            shape_str(tap.shape()) + " does not match activation " +
                                            shape_str(x.shape()));
      x = add(x, tap.requires_grad() ? tap.detached() : tap);
      ++next_tap;
    }
  }
  return x;
}

}  // namespace segobs
