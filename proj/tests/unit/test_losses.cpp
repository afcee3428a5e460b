// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "fd_check.hpp"
#include "segobs/layers.hpp"
#include "segobs/losses.hpp"

using namespace segobs;

namespace {
Tensor<double> random_probs(std::size_t c, std::size_t h, std::size_t w, Rng& rng, bool requires_grad = false) {
  Tensor<double> t(Shape{c, h, w}, 0.0, requires_grad);
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < hw; ++i) {
    double s = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = rng.uniform(0.05, 1.0);
      t.values()[ch * hw + i] = v;
      s += v;
    }
    for (std::size_t ch = 0; ch < c; ++ch) t.values()[ch * hw + i] /= s;
  }
  return t;
}
}  // namespace

TEST_CASE("kl of identical maps is exactly zero", "[losses]") {
  Rng rng(2);
  auto p = random_probs(4, 3, 3, rng);
  auto k = kl_divergence(p, p, 1e-8);
  for (std::size_t i = 0; i < k.size(); ++i) CHECK(k.data()[i] == 0.0);
}

TEST_CASE("kl hand case: one-hot vs uniform is ln 2", "[losses]") {
  auto p = Tensor<double>::from_data(Shape{2, 1, 1}, {1.0, 0.0});
  auto q = Tensor<double>::from_data(Shape{2, 1, 1}, {0.5, 0.5});
  auto k = kl_divergence(p, q, 0.0);
  CHECK(k.data()[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl with a floored zero stays finite and large", "[losses]") {
  auto p = Tensor<double>::from_data(Shape{2, 1, 1}, {0.5, 0.5});
  auto q = Tensor<double>::from_data(Shape{2, 1, 1}, {1.0, 0.0});
  const double eps = 1e-8;
  auto k = kl_divergence(p, q, eps);
  const double expected = 0.5 * std::log((0.5 + eps) / (1.0 + eps)) + 0.5 * std::log((0.5 + eps) / eps);
  CHECK(std::isfinite(k.data()[0]));
  CHECK(k.data()[0] == Catch::Approx(expected).epsilon(1e-10));
  CHECK(k.data()[0] > 5.0);
}

TEST_CASE("kl rejects shape mismatch and non-distributions", "[losses]") {
  Rng rng(4);
  auto p = random_probs(3, 2, 2, rng);
  auto q = random_probs(3, 2, 3, rng);
  CHECK_THROWS(kl_divergence(p, q, 1e-8));
  auto bad = Tensor<double>(Shape{3, 2, 2}, 0.9);
  CHECK_THROWS(kl_divergence(p, bad, 1e-8));
}

TEST_CASE("kl is non-negative up to the eps-induced error", "[losses]") {
  Rng rng(6);
  for (int it = 0; it < 200; ++it) {
    auto p = random_probs(5, 2, 2, rng);
    auto q = random_probs(5, 2, 2, rng);
    auto k = kl_divergence(p, q, 1e-8);
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(k.data()[i] >= -1e-6);
  }
}

TEST_CASE("kl gradient on q matches finite differences", "[losses][fd]") {
  Rng rng(8);
  auto p = random_probs(3, 2, 2, rng);
  auto logits = Tensor<double>(Shape{3, 2, 2}, 0.0, true);
  for (auto& v : logits.values()) v = rng.uniform(-1, 1);
  auto sm = make_softmax<double>("s");
  auto make_loss = [&] { return mean(kl_divergence(p, forward_layer(sm, logits, false), 1e-8)); };
  auto rep = testing::fd_check({&logits}, make_loss);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("cross entropy is zero for perfectly confident correct predictions", "[losses]") {
  const std::size_t hw = 6;
  std::vector<double> v(2 * hw, 0.0);
  std::vector<std::uint8_t> labels(hw, 1);
  for (std::size_t i = 0; i < hw; ++i) v[hw + i] = 1.0;
  auto probs = Tensor<double>::from_data(Shape{2, 2, 3}, std::move(v));
  auto loss = cross_entropy_loss(probs, std::span<const std::uint8_t>(labels), 0xff);
  CHECK(loss.item() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("cross entropy of uniform probabilities over four classes is ln 4", "[losses]") {
  auto probs = Tensor<double>(Shape{4, 2, 2}, 0.25);
  std::vector<std::uint8_t> labels{0, 1, 2, 3};
  auto loss = cross_entropy_loss(probs, std::span<const std::uint8_t>(labels), 0xff);
  CHECK(loss.item() == Catch::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy errors when every pixel is ignored", "[losses]") {
  auto probs = Tensor<double>(Shape{2, 1, 2}, 0.5);
  std::vector<std::uint8_t> labels{0, 0};
  CHECK_THROWS(cross_entropy_loss(probs, std::span<const std::uint8_t>(labels), 0));
}

TEST_CASE("cross entropy ignores the ignore_index pixels", "[losses]") {
  auto probs = Tensor<double>::from_data(Shape{2, 1, 2}, {0.9, 0.2, 0.1, 0.8});
  std::vector<std::uint8_t> labels{0, 0};
  labels[1] = 0;  // both claim class 0; ignore the second
  std::vector<std::uint8_t> lab2{0, 1};
  auto loss = cross_entropy_loss(probs, std::span<const std::uint8_t>(lab2), 1);
  CHECK(loss.item() == Catch::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient matches finite differences", "[losses][fd]") {
  Rng rng(10);
  auto logits = Tensor<double>(Shape{3, 2, 2}, 0.0, true);
  for (auto& v : logits.values()) v = rng.uniform(-1, 1);
  auto sm = make_softmax<double>("s");
  std::vector<std::uint8_t> labels{0, 2, 1, 0};
  auto make_loss = [&] {
    return cross_entropy_loss(forward_layer(sm, logits, false), std::span<const std::uint8_t>(labels), 0xff);
  };
  auto rep = testing::fd_check({&logits}, make_loss);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("entropy map is zero for one-hot and ln C for uniform", "[losses]") {
  auto uniform = Tensor<double>(Shape{4, 1, 1}, 0.25);
  CHECK(entropy_map(uniform)[0] == Catch::Approx(std::log(4.0)).epsilon(1e-9));
  auto onehot = Tensor<double>::from_data(Shape{4, 1, 1}, {0.0, 1.0, 0.0, 0.0});
  CHECK(entropy_map(onehot)[0] == Catch::Approx(0.0).margin(1e-12));
}
