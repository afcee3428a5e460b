// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "segobs/optim.hpp"

using namespace segobs;

namespace {
Tensor<double> param(double w, double g) {
  auto t = Tensor<double>::from_data(Shape{1}, {w}, true);
  t.zero_grad();
  t.node().grad[0] = g;
  return t;
}
}  // namespace

TEST_CASE("plain sgd step without momentum or decay", "[optim]") {
  auto w = param(1.0, 2.0);
  std::vector<Tensor<double>*> ps{&w};
  OptimizerState<double> st(0.1, 0.0, 0.0);
  sgd_step(st, ps);
  CHECK(w.values()[0] == Catch::Approx(0.8));
}

TEST_CASE("zero gradient with zero velocity leaves weights unchanged", "[optim]") {
  auto w = param(3.0, 0.0);
  std::vector<Tensor<double>*> ps{&w};
  OptimizerState<double> st(0.1, 0.5, 0.0);
  sgd_step(st, ps);
  CHECK(w.values()[0] == 3.0);
}

TEST_CASE("momentum and weight decay follow v <- mu v + g + wd w", "[optim]") {
  auto w = param(1.0, 1.0);
  std::vector<Tensor<double>*> ps{&w};
  OptimizerState<double> st(1e-3, 0.9, 5e-4);
  sgd_step(st, ps);
  CHECK(st.velocity[0][0] == Catch::Approx(1.0005).epsilon(1e-12));
  CHECK(w.values()[0] == Catch::Approx(0.9989995).epsilon(1e-12));
}

TEST_CASE("non-finite gradients abort the step", "[optim]") {
  auto w = param(1.0, std::numeric_limits<double>::quiet_NaN());
  std::vector<Tensor<double>*> ps{&w};
  OptimizerState<double> st(0.1, 0.0, 0.0);
  CHECK_THROWS(sgd_step(st, ps));
}

TEST_CASE("learning rate halves after epochs 20 and 40", "[optim]") {
  CHECK(lr_schedule(1e-3, 0) == Catch::Approx(1e-3));
  CHECK(lr_schedule(1e-3, 19) == Catch::Approx(1e-3));
  CHECK(lr_schedule(1e-3, 20) == Catch::Approx(5e-4));
  CHECK(lr_schedule(1e-3, 25) == Catch::Approx(5e-4));
  CHECK(lr_schedule(1e-3, 39) == Catch::Approx(5e-4));
  CHECK(lr_schedule(1e-3, 40) == Catch::Approx(2.5e-4));
  CHECK(lr_schedule(1e-3, 45) == Catch::Approx(2.5e-4));
  CHECK_THROWS(lr_schedule(1e-3, -1));
}

TEST_CASE("optimizer state validates hyperparameters", "[optim]") {
  CHECK_THROWS(OptimizerState<double>(0.0, 0.9, 0.0));
  CHECK_THROWS(OptimizerState<double>(0.1, 1.0, 0.0));
  CHECK_THROWS(OptimizerState<double>(0.1, 0.9, -1.0));
}
