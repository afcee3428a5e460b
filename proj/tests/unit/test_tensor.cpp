// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "fd_check.hpp"
#include "segobs/tensor.hpp"

using namespace segobs;

TEST_CASE("tensor construction validates shape/data agreement", "[tensor]") {
  CHECK_THROWS(Tensor<float>(Shape{}));
  CHECK_THROWS(Tensor<float>::from_data(Shape{2, 2}, std::vector<float>{1, 2, 3}));
  Tensor<float> t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
}

TEST_CASE("grad of sum(w*x) with x fixed is x", "[tensor][autograd]") {
  auto w = Tensor<double>::from_data(Shape{4}, {1, 2, 3, 4}, true);
  auto x = Tensor<double>::from_data(Shape{4}, {0.5, -1, 2, 7});
  auto loss = sum(mul(w, x));
  backward(loss);
  REQUIRE(w.has_grad());
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == Catch::Approx(x.data()[i]));
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("parameters unreachable from the loss keep their grads untouched", "[tensor][autograd]") {
  auto w = Tensor<double>::from_data(Shape{2}, {1, 2}, true);
  auto unused = Tensor<double>::from_data(Shape{2}, {5, 5}, true);
  auto loss = sum(scale(w, 3.0));
  backward(loss);
  CHECK(w.has_grad());
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("backward rejects non-scalar and non-finite losses", "[tensor][autograd]") {
  auto w = Tensor<double>::from_data(Shape{2}, {1, 2}, true);
  CHECK_THROWS(backward(scale(w, 2.0)));  // vector output
  auto bad = Tensor<double>::from_data(Shape{1}, {std::numeric_limits<double>::quiet_NaN()}, true);
  CHECK_THROWS(backward(bad));
}

TEST_CASE("grad accumulates across backward calls until zeroed", "[tensor][autograd]") {
  auto w = Tensor<double>::from_data(Shape{1}, {2.0}, true);
  auto make = [&] { return sum(mul(w, w)); };
  backward(make());
  backward(make());
  CHECK(w.grad()[0] == Catch::Approx(8.0));  // 2 * (2w)
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("NoGradGuard suppresses graph recording", "[tensor][autograd]") {
  auto w = Tensor<double>::from_data(Shape{2}, {1, 2}, true);
  {
    NoGradGuard ng;
    auto y = scale(w, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  auto y = scale(w, 2.0);
  CHECK(y.requires_grad());
}

TEST_CASE("elementwise ops agree with the finite-difference oracle", "[tensor][autograd][fd]") {
  Rng rng(7);
  auto a = Tensor<double>(Shape{3, 2}, 0.0, true);
  auto b = Tensor<double>(Shape{3, 2}, 0.0, true);
  for (auto& v : a.values()) v = rng.uniform(-2, 2);
  for (auto& v : b.values()) v = rng.uniform(0.2, 2);  // keep relu args off the kink
  auto make_loss = [&] {
    auto t = add(mul(a, b), scale(a, 0.5));
    t = relu_map(add_scalar(t, 0.1));
    return mean(t);
  };
  auto rep = testing::fd_check({&a, &b}, make_loss);
  CHECK(rep.max_rel_err < 1e-6);
}
