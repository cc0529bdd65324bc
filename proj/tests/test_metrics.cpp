#include <doctest.h>

#include <cmath>

#include "omega/metrics.hpp"
#include "omega/stn.hpp"
#include "test_util.hpp"

using namespace omega;

namespace {

Tensor<unsigned char> mask_from(std::vector<int> v, int h, int w) {
  Tensor<unsigned char> t({h, w});
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<unsigned char>(v[i]);
  return t;
}

}  // namespace

TEST_CASE("iou: identical, disjoint, shifted block") {
  Tensor<unsigned char> a = mask_from({1, 1, 0, 0}, 2, 2);
  CHECK(iou_class(a, a, 1) == doctest::Approx(1.0).epsilon(1e-9));
  Tensor<unsigned char> b = mask_from({0, 0, 1, 1}, 2, 2);
  CHECK(iou_class(a, b, 1) == doctest::Approx(0.0));
  // 2x2 block vs the same block shifted one pixel right in a 2x3 map
  Tensor<unsigned char> g = mask_from({1, 1, 0, 1, 1, 0}, 2, 3);
  Tensor<unsigned char> p = mask_from({0, 1, 1, 0, 1, 1}, 2, 3);
  CHECK(iou_class(g, p, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-9));
  // empty-empty scores 0 by the denominator guard
  Tensor<unsigned char> z = mask_from({0, 0, 0, 0}, 2, 2);
  CHECK(iou_class(z, z, 1) == 0.0);
}

TEST_CASE("dice: values and the 2J/(1+J) identity") {
  Tensor<unsigned char> a = mask_from({1, 1, 1, 0}, 2, 2);
  CHECK(dice_class(a, a, 1) == doctest::Approx(1.0).epsilon(1e-9));
  Tensor<unsigned char> b = mask_from({0, 0, 0, 1}, 2, 2);
  CHECK(dice_class(a, b, 1) == doctest::Approx(0.0));

  // masks with IoU 1/3 -> Dice 0.5
  Tensor<unsigned char> g = mask_from({1, 1, 0, 0, 0, 0}, 2, 3);
  Tensor<unsigned char> p = mask_from({0, 1, 1, 1, 0, 0}, 2, 3);
  CHECK(iou_class(g, p, 1) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(dice_class(g, p, 1) == doctest::Approx(0.4).epsilon(1e-9));

  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor<unsigned char> x({4, 4}), y({4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
      x.data[i] = static_cast<unsigned char>(rng.uniform_int(2));
      y.data[i] = static_cast<unsigned char>(rng.uniform_int(2));
    }
    const double j = iou_class(x, y, 1);
    const double d = dice_class(x, y, 1);
    CHECK(d == doctest::Approx(2.0 * j / (1.0 + j)).epsilon(1e-9));
    CHECK(j <= d + 1e-12);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("weighted_fg_iou: hand-counted fixture") {
  // GT: class 1 = 3 px, class 2 = 1 px; prediction nails class 1, misses 2
  Tensor<unsigned char> gt = mask_from({1, 1, 1, 2, 0, 0}, 2, 3);
  Tensor<unsigned char> pred = mask_from({1, 1, 1, 0, 0, 0}, 2, 3);
  CHECK(weighted_fg_iou(gt, pred, {1, 2}) == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(weighted_fg_iou(gt, gt, {1, 2}) == doctest::Approx(1.0).epsilon(1e-9));
  Tensor<unsigned char> none = mask_from({0, 0, 0, 0, 0, 0}, 2, 3);
  CHECK(weighted_fg_iou(gt, none, {1, 2}) == doctest::Approx(0.0));
  CHECK_THROWS(weighted_fg_iou(none, pred, {1, 2}));
  // weights ignore classes absent from GT
  CHECK(weighted_fg_iou(gt, pred, {1, 2, 3}) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("summarize: interpolated quantiles") {
  SummaryStats a = summarize({1, 2, 3});
  CHECK(a.median == doctest::Approx(2.0));
  SummaryStats b = summarize({1, 2, 3, 4});
  CHECK(b.median == doctest::Approx(2.5));
  CHECK(b.q1 == doctest::Approx(1.75));
  CHECK(b.q3 == doctest::Approx(3.25));
  CHECK(b.iqr == doctest::Approx(1.5));
  SummaryStats c = summarize({5, 5, 5, 5});
  CHECK(c.iqr == 0.0);
  CHECK_THROWS(summarize({}));
}

TEST_CASE("success_curve: endpoints and derived fixture") {
  {
    SuccessCurve c = success_curve(std::vector<double>(5, 1.0));
    for (const auto& pt : c.points) CHECK(pt.success == 1.0);
    CHECK(c.auc == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    SuccessCurve c = success_curve(std::vector<double>(5, 0.0));
    for (const auto& pt : c.points) CHECK(pt.success == 0.0);
    CHECK(c.auc == doctest::Approx(0.0));
  }
  {
    std::vector<double> values{0.5, 0.7, 0.9};
    SuccessCurve c = success_curve(values);
    auto at = [&](double t) {
      for (const auto& pt : c.points)
        if (std::abs(pt.threshold - t) < 1e-9) return pt.success;
      return -1.0;
    };
    CHECK(at(0.45) == doctest::Approx(1.0));
    CHECK(at(0.60) == doctest::Approx(2.0 / 3.0));
    CHECK(at(0.80) == doctest::Approx(1.0 / 3.0));
    // monotone non-increasing
    for (std::size_t i = 1; i < c.points.size(); ++i)
      CHECK(c.points[i].success <= c.points[i - 1].success + 1e-12);
    // brute-force recount over the same grid matches exactly
    double area = 0.0;
    double prev_s = -1.0, prev_t = 0.0;
    for (int i = 0; i <= 60; ++i) {
      const double t = static_cast<double>(40 + i) / 100.0;
      std::size_t hits = 0;
      for (double v : values) hits += static_cast<std::size_t>(v >= t);
      const double s = static_cast<double>(hits) / 3.0;
      if (i > 0) area += 0.5 * (s + prev_s) * (t - prev_t);
      prev_s = s;
      prev_t = t;
    }
    CHECK(c.auc == area / 0.6);
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
  }
}

TEST_CASE("regress_params: exact and fixture cases") {
  {
    std::vector<double> gt{0.1, 0.4, -0.3, 0.8, 0.2};
    Regression r = regress_params(gt, gt, false);
    CHECK(r.r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.intercept == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.significant);
  }
  {
    std::vector<double> gt{0.1, 0.4, -0.3, 0.8, 0.2};
    std::vector<double> pred;
    for (double v : gt) pred.push_back(0.87 * v);
    Regression r = regress_params(pred, gt, false);
    CHECK(r.slope == doctest::Approx(0.87).epsilon(1e-12));
    CHECK(r.r == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    // 5-point fixture against hand-solved normal equations
    std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> y{2.1, 2.9, 4.2, 4.8, 6.3};
    Regression r = regress_params(y, x, false);
    // slope = sum((x-mx)(y-my)) / sum((x-mx)^2) = 10.3/10, intercept = my - slope*mx
    CHECK(r.slope == doctest::Approx(1.03).epsilon(1e-9));
    CHECK(r.intercept == doctest::Approx(4.06 - 1.03 * 3.0).epsilon(1e-9));
    const double expected_r = 10.3 / std::sqrt(10.0 * 10.772);
    CHECK(r.r == doctest::Approx(expected_r).epsilon(1e-9));
  }
  {
    // rotation residuals are wrapped before fitting
    std::vector<double> gt{-3.0, 3.0, 1.5, -1.5, 0.5};
    std::vector<double> pred;
    for (double v : gt) pred.push_back(wrap_angle(v + 0.1 + 2.0 * M_PI));
    Regression r = regress_params(pred, gt, true);
    CHECK(r.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.intercept == doctest::Approx(0.1).epsilon(1e-9));
  }
  CHECK_THROWS(regress_params({1, 2, 3}, {5, 5, 5}, false));
  CHECK_THROWS(regress_params({1, 2}, {1, 2}, false));
}

TEST_CASE("bland_altman: fixtures") {
  {
    std::vector<double> v{0.3, -0.2, 0.9};
    BlandAltman ba = bland_altman(v, v, false);
    CHECK(ba.bias == 0.0);
    CHECK(ba.loa_low == 0.0);
    CHECK(ba.loa_high == 0.0);
    CHECK(ba.p95 == 0.0);
  }
  {
    // differences {-1, +1}: bias 0, LoA +/-1.96 (population std = 1)
    BlandAltman ba = bland_altman({-1.0, 1.0}, {0.0, 0.0}, false);
    CHECK(ba.bias == doctest::Approx(0.0));
    CHECK(ba.loa_low == doctest::Approx(-1.96).epsilon(1e-12));
    CHECK(ba.loa_high == doctest::Approx(1.96).epsilon(1e-12));
  }
  {
    // rotation pair wraps: theta = pi-0.1 vs gt -pi+0.1 -> difference -0.2
    BlandAltman ba = bland_altman({M_PI - 0.1, 0.0}, {-M_PI + 0.1, 0.0}, true);
    CHECK(ba.bias == doctest::Approx(-0.1).epsilon(1e-9));  // mean of {-0.2, 0}
  }
  CHECK_THROWS(bland_altman({1.0}, {1.0}, false));
}
