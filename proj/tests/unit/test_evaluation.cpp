// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "metric_oracles.hpp"
#include "segobs/evaluation.hpp"

using namespace segobs;

namespace {

ScoredPixelSet make_set(std::vector<double> scores, std::vector<std::uint8_t> correct) {
  ScoredPixelSet s;
  s.scores = std::move(scores);
  s.correct = std::move(correct);
  s.image_index.assign(s.scores.size(), 0);
  return s;
}

ScoredPixelSet random_set(Rng& rng, std::size_t max_n = 200, bool allow_ties = true) {
  const std::size_t n = 2 + rng.uniform_int(max_n - 1);
  ScoredPixelSet s;
  for (std::size_t i = 0; i < n; ++i) {
    double v = rng.uniform();
    if (allow_ties && rng.bernoulli(0.3)) v = std::round(v * 8) / 8.0;  // force tie blocks
    s.scores.push_back(v);
    s.correct.push_back(rng.bernoulli(0.7) ? 1 : 0);
    s.image_index.push_back(0);
  }
  if (std::count(s.correct.begin(), s.correct.end(), 1) == 0) s.correct[0] = 1;
  return s;
}

}  // namespace

TEST_CASE("pr curve enumerated example", "[evaluation]") {
  const auto s = make_set({.1, .2, .3, .4}, {1, 1, 0, 1});
  const auto curve = pr_curve(s);
  REQUIRE(curve.points.size() == 4);
  CHECK(curve.points[1].threshold == 0.2);
  CHECK(curve.points[1].precision == Catch::Approx(1.0));
  CHECK(curve.points[1].recall == Catch::Approx(2.0 / 3));
  CHECK(curve.points[3].precision == Catch::Approx(3.0 / 4));
  CHECK(curve.points[3].recall == Catch::Approx(1.0));

  CHECK(recall_at_precision(curve, 0.95) == Catch::Approx(2.0 / 3));
  const double expected_aupr = (1.0 / 3) * 1.0 + (1.0 / 3) * 1.0 + 0.0 * (2.0 / 3) + (1.0 / 3) * 0.75;
  CHECK(aupr(curve) == Catch::Approx(expected_aupr).margin(1e-12));
}

TEST_CASE("all-correct sets give precision 1 everywhere and full recall", "[evaluation]") {
  const auto s = make_set({.5, .1, .9}, {1, 1, 1});
  const auto curve = pr_curve(s);
  for (const auto& p : curve.points) CHECK(p.precision == 1.0);
  CHECK(recall_at_precision(curve, 0.95) == 1.0);
  CHECK(aupr(curve) == Catch::Approx(1.0));
}

TEST_CASE("a precision target nobody reaches yields zero recall", "[evaluation]") {
  const auto s = make_set({.1, .2}, {0, 1});  // best precision is 1/2 at any accepting threshold... first point 0
  const auto curve = pr_curve(s);
  CHECK(recall_at_precision(curve, 0.95) == 0.0);
}

TEST_CASE("pr curve rejects empty and all-wrong inputs", "[evaluation]") {
  CHECK_THROWS(pr_curve(ScoredPixelSet{}));
  CHECK_THROWS(pr_curve(make_set({.1}, {0})));
}

TEST_CASE("image coverage enumerated example and degenerate cases", "[evaluation]") {
  const std::vector<double> scores{.1, .2, .3, .4};
  const std::vector<std::uint8_t> correct{1, 1, 1, 0};
  CHECK(image_coverage(scores, correct, 0.95) == Catch::Approx(0.75));
  const std::vector<std::uint8_t> all1{1, 1, 1, 1}, all0{0, 0, 0, 0};
  CHECK(image_coverage(scores, all1, 0.95) == 1.0);
  CHECK(image_coverage(scores, all0, 0.95) == 0.0);
}

TEST_CASE("trigger rate counts coverages over the threshold", "[evaluation]") {
  const std::vector<double> cov{0.8, 0.5, 0.9, 0.7};
  CHECK(trigger_rate(cov, 0.75) == Catch::Approx(0.5));
  CHECK(trigger_rate(cov, 0.0) == 1.0);
  CHECK(trigger_rate(cov, 0.33) == 1.0);
  CHECK_THROWS(trigger_rate({}, 0.5));
}

TEST_CASE("metrics match the brute-force oracles on random instances", "[evaluation][oracle]") {
  Rng rng(2024);
  for (int it = 0; it < 300; ++it) {
    const auto s = random_set(rng);
    const auto curve = pr_curve(s);
    const auto opts = testing::oracle_pr(s.scores, s.correct);
    REQUIRE(curve.points.size() == opts.size());
    for (std::size_t i = 0; i < opts.size(); ++i) {
      CHECK(curve.points[i].threshold == opts[i].threshold);
      CHECK(std::fabs(curve.points[i].precision - opts[i].precision) <= 1e-12);
      CHECK(std::fabs(curve.points[i].recall - opts[i].recall) <= 1e-12);
    }
    CHECK(std::fabs(aupr(curve) - testing::oracle_aupr(opts)) <= 1e-12);
    for (double p : {0.5, 0.8, 0.95, 1.0})
      CHECK(std::fabs(recall_at_precision(curve, p) - testing::oracle_recall_at_precision(opts, p)) <= 1e-12);
    CHECK(std::fabs(image_coverage(s.scores, s.correct, 0.95) -
                    testing::oracle_image_coverage(s.scores, s.correct, 0.95)) <= 1e-12);
  }
}

TEST_CASE("metrics are invariant under strictly monotone score transforms", "[evaluation]") {
  Rng rng(77);
  for (int it = 0; it < 50; ++it) {
    const auto s = random_set(rng, 100);
    auto transformed = s;
    for (auto& v : transformed.scores) v = std::exp(3.0 * v) - 0.5;  // strictly increasing
    const auto c1 = pr_curve(s);
    const auto c2 = pr_curve(transformed);
    REQUIRE(c1.points.size() == c2.points.size());
    for (std::size_t i = 0; i < c1.points.size(); ++i) {
      CHECK(c1.points[i].precision == Catch::Approx(c2.points[i].precision).margin(1e-12));
      CHECK(c1.points[i].recall == Catch::Approx(c2.points[i].recall).margin(1e-12));
    }
    CHECK(aupr(c1) == Catch::Approx(aupr(c2)).margin(1e-12));
    CHECK(recall_at_precision(c1, 0.95) == Catch::Approx(recall_at_precision(c2, 0.95)).margin(1e-12));
    CHECK(image_coverage(s.scores, s.correct, 0.95) ==
          Catch::Approx(image_coverage(transformed.scores, transformed.correct, 0.95)).margin(1e-12));
  }
}

TEST_CASE("uncertainty scores: one-hot and uniform special cases", "[evaluation]") {
  auto onehot = Tensor<float>::from_data(Shape{4, 1, 1}, {0, 0, 1, 0});
  CHECK(score_softmax(onehot)[0] == Catch::Approx(0.0));
  CHECK(score_entropy(onehot)[0] == Catch::Approx(0.0).margin(1e-9));
  auto uniform = Tensor<float>(Shape{4, 1, 1}, 0.25f);
  CHECK(score_softmax(uniform)[0] == Catch::Approx(0.75));
  CHECK(score_entropy(uniform)[0] == Catch::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK(score_void_class(uniform)[0] == Catch::Approx(0.25));
  CHECK(score_observer(uniform, uniform, 1e-8)[0] == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("map rendering special cases", "[evaluation]") {
  const std::size_t h = 4, w = 4, hw = 16;
  std::vector<double> uniform_scores(hw, 0.7);
  auto grey = render_map(MapKind::uncertainty, h, w, &uniform_scores, nullptr, nullptr, nullptr);
  for (auto v : grey.values()) CHECK(v == 0.5f);

  std::vector<std::uint8_t> pred(hw, kClassRoad), correct(hw, 1);
  auto safety = render_map(MapKind::safety, h, w, &uniform_scores, &pred, &correct, nullptr);
  for (std::size_t i = 0; i < hw; ++i) {  // full coverage: all class-colored, no red/black
    CHECK(safety.values()[i] == kClassPalette[kClassRoad][0]);
  }

  std::vector<std::int8_t> c(hw, -1);
  auto lab = render_map(MapKind::labels, h, w, nullptr, nullptr, nullptr, &c);
  for (std::size_t i = 0; i < hw; ++i) CHECK(lab.values()[i] == 0.85f);  // red channel
}
