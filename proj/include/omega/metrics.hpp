#pragma once

#include <vector>

#include "omega/tensor.hpp"

namespace omega {

// Jaccard index |A∩B| / |A∪B| for one class; denominator guarded by 1e-12,
// so empty-vs-empty scores 0.
double iou_class(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred, int cls);
double dice_class(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred, int cls);

// Convex combination of per-class IoUs, weighted by each class's share of
// the ground-truth foreground. Throws when the ground truth has no
// foreground pixels (the metric is undefined for that image).
double weighted_fg_iou(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred,
                       const std::vector<int>& fg_classes);

struct SummaryStats {
  double median = 0, q1 = 0, q3 = 0, iqr = 0;
};

// Linear-interpolation (type-7) quantiles. Throws on empty input.
SummaryStats summarize(std::vector<double> values);
double quantile(std::vector<double> values, double p);

struct CurvePoint {
  double threshold = 0;
  double success = 0;
};

struct SuccessCurve {
  std::vector<CurvePoint> points;  // thresholds 0.40..1.00 step 0.01
  double auc = 0;                  // trapezoidal, normalized by the 0.6 range
};

SuccessCurve success_curve(const std::vector<double>& values);

struct Regression {
  double r = 0;
  double slope = 0;
  double intercept = 0;
  double t_stat = 0;
  double p_value = 1.0;
  bool significant = false;  // p < 0.05
};

// Least squares of predicted on ground truth (pred = slope*gt + intercept)
// with Pearson R. Rotation residuals are wrapped onto gt before fitting.
Regression regress_params(const std::vector<double>& predicted,
                          const std::vector<double>& ground_truth, bool wrap_rotation);

struct BlandAltman {
  double bias = 0;
  double loa_low = 0, loa_high = 0;  // bias -/+ 1.96 * std of differences
  double p95 = 0;                    // 95th percentile of |difference|
};

BlandAltman bland_altman(const std::vector<double>& predicted,
                         const std::vector<double>& ground_truth, bool wrap_rotation);

}  // namespace omega
