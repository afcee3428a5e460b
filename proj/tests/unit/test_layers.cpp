// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "fd_check.hpp"
#include "segobs/layers.hpp"

using namespace segobs;

namespace {

Tensor<double> random_chw(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  Tensor<double> t(std::move(shape), 0.0, requires_grad);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// keeps relu/maxpool inputs away from kinks and ties
void nudge_off_kinks(Tensor<double>& t, Rng& rng) {
  for (auto& v : t.values())
    while (std::fabs(v) < 0.05) v = rng.uniform(-1.0, 1.0);
}

}  // namespace

TEST_CASE("conv2d with a centered-one kernel is the identity", "[layers]") {
  Rng rng(3);
  auto l = make_conv2d<double>("c", 2, 2, rng);
  std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
  // weight layout (Cout,Cin,3,3): center of kernel matching in/out channel
  for (std::size_t c = 0; c < 2; ++c) l.weight.values()[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
  auto x = random_chw(Shape{2, 5, 4}, rng);
  auto y = forward_layer(l, x, false);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == Catch::Approx(x.data()[i]));
}

TEST_CASE("conv2d rejects channel mismatch with a diagnostic naming the layer", "[layers]") {
  Rng rng(3);
  auto l = make_conv2d<double>("stage1.conv", 4, 8, rng);
  auto x = random_chw(Shape{3, 4, 4}, rng);
  try {
    forward_layer(l, x, false);
    FAIL("expected shape mismatch");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage1.conv") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
}

TEST_CASE("softmax on per-pixel logits (0,0) yields (0.5,0.5)", "[layers]") {
  auto l = make_softmax<double>("s");
  auto x = Tensor<double>(Shape{2, 1, 1}, 0.0);
  auto y = forward_layer(l, x, false);
  CHECK(y.data()[0] == Catch::Approx(0.5));
  CHECK(y.data()[1] == Catch::Approx(0.5));
}

TEST_CASE("softmax outputs valid distributions", "[layers]") {
  Rng rng(11);
  auto l = make_softmax<double>("s");
  auto x = random_chw(Shape{5, 6, 7}, rng, -8, 8);
  auto y = forward_layer(l, x, false);
  const std::size_t hw = 42;
  for (std::size_t i = 0; i < hw; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      const double p = y.data()[c * hw + i];
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      s += p;
    }
    CHECK(std::fabs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("maxpool and upsample definition cases", "[layers]") {
  auto pool = make_maxpool<double>("p");
  auto up = make_upsample<double>("u");
  auto x = Tensor<double>::from_data(Shape{1, 2, 2}, {1, 2, 3, 4});
  auto y = forward_layer(pool, x, false);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y.data()[0] == 4.0);
  auto z = forward_layer(up, y, false);
  REQUIRE(z.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(z.data()[i] == 4.0);
}

TEST_CASE("maxpool then upsample replicates each 2x2 block max over all four cells", "[layers]") {
  Rng rng(5);
  auto pool = make_maxpool<double>("p");
  auto up = make_upsample<double>("u");
  auto x = random_chw(Shape{3, 8, 6}, rng);
  auto y = forward_layer(up, forward_layer(pool, x, false), false);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t by = 0; by < 4; ++by)
      for (std::size_t bx = 0; bx < 3; ++bx) {
        double mx = -1e30;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) mx = std::max(mx, x.data()[(c * 8 + 2 * by + dy) * 6 + 2 * bx + dx]);
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            CHECK(y.data()[(c * 8 + 2 * by + dy) * 6 + 2 * bx + dx] == Catch::Approx(mx));
      }
}

TEST_CASE("dropout2d is the identity when inactive or p=0", "[layers]") {
  Rng rng(9);
  auto x = random_chw(Shape{4, 4, 4}, rng);

  auto l = make_dropout2d<double>("d", 0.5);
  auto det = forward_layer(l, x, false);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(det.data()[i] == x.data()[i]);

  auto l0 = make_dropout2d<double>("d0", 0.0);
  Rng r2(1);
  auto stoch = forward_layer(l0, x, true, &r2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(stoch.data()[i] == x.data()[i]);
}

TEST_CASE("dropout2d zeroes whole channels and rescales survivors", "[layers]") {
  Rng rng(13);
  auto x = random_chw(Shape{64, 2, 2}, rng, 0.5, 1.0);
  auto l = make_dropout2d<double>("d", 0.25);
  Rng r(77);
  auto y = forward_layer(l, x, true, &r);
  const std::size_t hw = 4;
  std::size_t zeroed = 0;
  for (std::size_t c = 0; c < 64; ++c) {
    const bool is_zero = y.data()[c * hw] == 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      if (is_zero)
        CHECK(y.data()[c * hw + i] == 0.0);
      else
        CHECK(y.data()[c * hw + i] == Catch::Approx(x.data()[c * hw + i] / 0.75));
    }
    zeroed += is_zero;
  }
  CHECK(zeroed > 0);
  CHECK(zeroed < 64);

  Rng r_again(77);
  auto y2 = forward_layer(l, x, true, &r_again);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y2.data()[i] == y.data()[i]);  // same seed, same mask
}

TEST_CASE("batchnorm normalises with batch stats in train mode and running stats in eval", "[layers]") {
  Rng rng(21);
  auto l = make_batchnorm<double>("bn", 3);
  auto x = random_chw(Shape{3, 6, 6}, rng, -2, 5);
  auto y = forward_layer(l, x, true);
  const std::size_t hw = 36;
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < hw; ++i) m += y.data()[c * hw + i];
    m /= hw;
    for (std::size_t i = 0; i < hw; ++i) v += (y.data()[c * hw + i] - m) * (y.data()[c * hw + i] - m);
    v /= hw;
    CHECK(std::fabs(m) < 1e-10);
    CHECK(v == Catch::Approx(1.0).margin(1e-3));
  }
  // eval mode uses the running stats updated above
  auto z = forward_layer(l, x, false);
  CHECK(z.data()[0] != y.data()[0]);
}

TEST_CASE("every layer kind matches the finite-difference oracle", "[layers][fd]") {
  Rng rng(1234);

  SECTION("conv2d") {
    auto l = make_conv2d<double>("c", 3, 4, rng);
    auto x = random_chw(Shape{3, 4, 5}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{4, 4, 5}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x, &l.weight, &l.bias}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("linear_per_pixel") {
    auto l = make_linear_per_pixel<double>("fc", 3, 3, rng);
    auto x = random_chw(Shape{3, 2, 3}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{3, 2, 3}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x, &l.weight, &l.bias}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("batchnorm train mode") {
    auto l = make_batchnorm<double>("bn", 3);
    for (auto& v : l.bn_scale.values()) v = rng.uniform(0.5, 1.5);
    for (auto& v : l.bn_shift.values()) v = rng.uniform(-0.5, 0.5);
    auto x = random_chw(Shape{3, 4, 4}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{3, 4, 4}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, true, nullptr, false), w_map)); };
    auto rep = testing::fd_check({&x, &l.bn_scale, &l.bn_shift}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("batchnorm eval mode") {
    auto l = make_batchnorm<double>("bn", 2);
    for (auto& v : l.running_mean) v = rng.uniform(-0.5, 0.5);
    for (auto& v : l.running_var) v = rng.uniform(0.5, 2.0);
    auto x = random_chw(Shape{2, 4, 4}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{2, 4, 4}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x, &l.bn_scale, &l.bn_shift}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("relu") {
    auto l = make_relu<double>("r");
    auto x = random_chw(Shape{2, 3, 3}, rng, -1, 1, true);
    nudge_off_kinks(x, rng);
    auto w_map = random_chw(Shape{2, 3, 3}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("maxpool2x2") {
    auto l = make_maxpool<double>("p");
    auto x = random_chw(Shape{2, 4, 4}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{2, 2, 2}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("upsample2x2") {
    auto l = make_upsample<double>("u");
    auto x = random_chw(Shape{2, 3, 3}, rng, -1, 1, true);
    auto w_map = random_chw(Shape{2, 6, 6}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("dropout2d stochastic with a fixed mask") {
    auto l = make_dropout2d<double>("d", 0.4);
    auto x = random_chw(Shape{6, 3, 3}, rng, 0.2, 1.0, true);
    auto w_map = random_chw(Shape{6, 3, 3}, rng);
    auto make_loss = [&] {
      Rng fixed(99);
      return sum(mul(forward_layer(l, x, true, &fixed), w_map));
    };
    auto rep = testing::fd_check({&x}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
  SECTION("softmax") {
    auto l = make_softmax<double>("s");
    auto x = random_chw(Shape{4, 3, 2}, rng, -2, 2, true);
    auto w_map = random_chw(Shape{4, 3, 2}, rng);
    auto make_loss = [&] { return sum(mul(forward_layer(l, x, false), w_map)); };
    auto rep = testing::fd_check({&x}, make_loss);
    CHECK(rep.max_rel_err < 1e-3);
  }
}
