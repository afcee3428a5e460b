// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "segobs/models.hpp"

using namespace segobs;

namespace {

ArchConfig small_cfg() {
  ArchConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.num_classes = 4;
  cfg.widths = {4, 4, 8, 8, 8};
  cfg.dropout_p = 0.5;
  return cfg;
}

Tensor<float> random_image(const ArchConfig& cfg, Rng& rng) {
  Tensor<float> img(Shape{3, cfg.height, cfg.width});
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

bool bitwise_equal(SegModel<float>& a, SegModel<float>& b) {
  auto sa = a.named_state();
  auto sb = b.named_state();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i].first != sb[i].first || *sa[i].second != *sb[i].second) return false;
  return true;
}

}  // namespace

TEST_CASE("target forward maps (3,H,W) to a (C,H,W) distribution", "[models]") {
  ArchConfig cfg;
  cfg.height = 64;
  cfg.width = 64;
  cfg.num_classes = 6;
  cfg.widths = {8, 16, 32, 64, 64};
  Rng rng(1);
  auto model = build_target<float>(cfg, rng);
  Rng ir(2);
  auto img = random_image(cfg, ir);
  NoGradGuard ng;
  auto probs = model.forward(img, ForwardOpts::eval());
  REQUIRE(probs.shape() == Shape{6, 64, 64});
  const std::size_t hw = 64 * 64;
  for (std::size_t i = 0; i < hw; i += 997) {
    float s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += probs.data()[c * hw + i];
    CHECK(std::fabs(s - 1.0f) < 1e-5f);
  }
}

TEST_CASE("image sizes not divisible by 32 are rejected", "[models]") {
  ArchConfig cfg = small_cfg();
  cfg.height = 50;
  Rng rng(1);
  CHECK_THROWS(build_target<float>(cfg, rng));
}

TEST_CASE("two builds with the same seed have bitwise-identical parameters", "[models]") {
  const auto cfg = small_cfg();
  Rng r1(42), r2(42);
  auto a = build_target<float>(cfg, r1);
  auto b = build_target<float>(cfg, r2);
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("forward_with_taps is deterministic and returns ten taps", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(7);
  auto model = build_target<float>(cfg, rng);
  Rng ir(8);
  auto img = random_image(cfg, ir);
  NoGradGuard ng;
  auto [p1, taps1] = forward_with_taps(model, img, false);
  auto [p2, taps2] = forward_with_taps(model, img, false);
  CHECK(taps1.size() == 10);
  CHECK(p1.values() == p2.values());
  for (std::size_t i = 0; i < taps1.size(); ++i) CHECK(taps1[i].values() == taps2[i].values());
}

TEST_CASE("stochastic forward with p=0 equals the deterministic forward", "[models]") {
  auto cfg = small_cfg();
  cfg.dropout_p = 0.0;
  Rng rng(9);
  auto model = build_target<float>(cfg, rng);
  Rng ir(10);
  auto img = random_image(cfg, ir);
  NoGradGuard ng;
  Rng dr(11);
  auto [p1, t1] = forward_with_taps(model, img, true, &dr);
  auto [p2, t2] = forward_with_taps(model, img, false);
  CHECK(p1.values() == p2.values());
}

TEST_CASE("mc dropout mean with T=1 and p=0 equals the deterministic forward", "[models]") {
  auto cfg = small_cfg();
  cfg.dropout_p = 0.0;
  Rng rng(12);
  auto model = build_target<float>(cfg, rng);
  Rng ir(13);
  auto img = random_image(cfg, ir);
  Rng mr(14);
  auto mean1 = mc_dropout_mean(model, img, 1, mr);
  NoGradGuard ng;
  auto det = model.forward(img, ForwardOpts::eval());
  CHECK(mean1.values() == det.values());
}

TEST_CASE("mc dropout mean is a valid distribution and reproducible under a fixed seed", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(15);
  auto model = build_target<float>(cfg, rng);
  Rng ir(16);
  auto img = random_image(cfg, ir);
  Rng mr1(17), mr2(17);
  auto m1 = mc_dropout_mean(model, img, 5, mr1);
  auto m2 = mc_dropout_mean(model, img, 5, mr2);
  CHECK(m1.values() == m2.values());
  const std::size_t hw = cfg.height * cfg.width;
  for (std::size_t i = 0; i < hw; i += 101) {
    float s = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) s += m1.data()[c * hw + i];
    CHECK(std::fabs(s - 1.0f) < 1e-5f);
  }
  CHECK_THROWS(mc_dropout_mean(model, img, 0, mr1));
}

TEST_CASE("variance of the mc mean shrinks as T grows", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(18);
  auto model = build_target<float>(cfg, rng);
  Rng ir(19);
  auto img = random_image(cfg, ir);

  auto mean_variance = [&](std::size_t t_passes) {
    const std::size_t n_seeds = 10;
    std::vector<std::vector<float>> means;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      Rng mr(100 + s);
      means.push_back(mc_dropout_mean(model, img, t_passes, mr).values());
    }
    double acc = 0;
    const std::size_t n = means[0].size();
    for (std::size_t i = 0; i < n; ++i) {
      double m = 0;
      for (const auto& v : means) m += v[i];
      m /= n_seeds;
      double var = 0;
      for (const auto& v : means) var += (v[i] - m) * (v[i] - m);
      acc += var / n_seeds;
    }
    return acc / static_cast<double>(n);
  };

  CHECK(mean_variance(50) < mean_variance(2));
}

TEST_CASE("observer copies target weights except the identity head", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(21);
  auto target = build_target<float>(cfg, rng);
  auto obs = build_observer(cfg, target);

  auto st = target.named_state();
  auto so = obs.stack.named_state();
  REQUIRE(st.size() == so.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st[i].first.rfind("head.linear", 0) == 0) continue;
    CHECK(*st[i].second == *so[i].second);
  }
  for (auto& l : obs.stack.layers) {
    if (l.kind == LayerKind::linear_per_pixel) {
      const std::size_t C = l.weight.dim(0);
      for (std::size_t a = 0; a < C; ++a)
        for (std::size_t b = 0; b < C; ++b) CHECK(l.weight.values()[a * C + b] == (a == b ? 1.0f : 0.0f));
      for (auto v : l.bias.values()) CHECK(v == 0.0f);
    }
  }
  CHECK(obs.stack.tap_layers.size() == target.tap_layers.size());

  ArchConfig other = cfg;
  other.num_classes = 5;
  CHECK_THROWS(build_observer(other, target));
}

TEST_CASE("observer forward with zero taps equals its stack applied alone and stays finite", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(23);
  auto target = build_target<float>(cfg, rng);
  auto obs = build_observer(cfg, target);
  Rng ir(24);
  auto img = random_image(cfg, ir);
  NoGradGuard ng;

  std::vector<Tensor<float>> zero_taps;
  {
    auto [probs, taps] = forward_with_taps(target, img, false);
    for (auto& t : taps) zero_taps.emplace_back(t.shape(), 0.0f);
  }
  auto yo = observer_forward(obs, img, zero_taps);
  auto plain = obs.stack.forward(img, ForwardOpts::eval());
  CHECK(yo.values() == plain.values());
  CHECK(all_finite(yo.values()));
}

TEST_CASE("observer output is a distribution, deterministic, and rejects bad taps", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(25);
  auto target = build_target<float>(cfg, rng);
  auto obs = build_observer(cfg, target);
  Rng ir(26);
  auto img = random_image(cfg, ir);
  NoGradGuard ng;
  auto [probs, taps] = forward_with_taps(target, img, false);
  auto y1 = observer_forward(obs, img, taps);
  auto y2 = observer_forward(obs, img, taps);
  CHECK(y1.values() == y2.values());
  const std::size_t hw = cfg.height * cfg.width;
  for (std::size_t i = 0; i < hw; i += 101) {
    float s = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) s += y1.data()[c * hw + i];
    CHECK(std::fabs(s - 1.0f) < 1e-5f);
  }

  auto short_taps = taps;
  short_taps.pop_back();
  CHECK_THROWS(observer_forward(obs, img, short_taps));
  auto bad_taps = taps;
  bad_taps[0] = Tensor<float>(Shape{1, 2, 2}, 0.0f);
  CHECK_THROWS(observer_forward(obs, img, bad_taps));
}

TEST_CASE("gradients reach observer parameters but never the injected taps or target", "[models]") {
  const auto cfg = small_cfg();
  Rng rng(27);
  auto target = build_target<float>(cfg, rng);
  auto obs = build_observer(cfg, target);
  Rng ir(28);
  auto img = random_image(cfg, ir);

  std::vector<Tensor<float>> taps;
  Tensor<float> tprobs;
  {
    NoGradGuard ng;  // taps are constants
    auto [p, t] = forward_with_taps(target, img, false);
    taps = std::move(t);
    tprobs = std::move(p);
  }
  auto yo = observer_forward(obs, img, taps);
  auto loss = mean(yo);
  backward(loss);

  bool any_obs_grad = false;
  for (auto* p : obs.parameters()) any_obs_grad = any_obs_grad || p->has_grad();
  CHECK(any_obs_grad);
  for (auto& t : taps) CHECK_FALSE(t.has_grad());
  for (auto* p : target.parameters()) CHECK_FALSE(p->has_grad());
}
