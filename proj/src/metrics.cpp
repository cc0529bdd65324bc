#include "omega/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "omega/stn.hpp"

namespace omega {

namespace {

constexpr double kDenomGuard = 1e-12;

void count_class(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred, int cls,
                 std::size_t& inter, std::size_t& gt_count, std::size_t& pred_count) {
  check(gt.same_shape(pred), "metrics: mask shape mismatch");
  inter = gt_count = pred_count = 0;
  const auto c = static_cast<unsigned char>(cls);
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const bool a = gt.data[i] == c, b = pred.data[i] == c;
    inter += static_cast<std::size_t>(a && b);
    gt_count += static_cast<std::size_t>(a);
    pred_count += static_cast<std::size_t>(b);
  }
}

// regularized incomplete beta, for the two-sided Student-t tail
double gammln(double x) {
  static const double cof[6] = {76.18009172947146,  -86.50532032941677, 24.01409824083091,
                                -1.231739572450155, 0.1208650973866179e-2, -0.5395239384953e-5};
  double y = x, tmp = x + 5.5;
  tmp -= (x + 0.5) * std::log(tmp);
  double ser = 1.000000000190015;
  for (double c : cof) ser += c / ++y;
  return -tmp + std::log(2.5066282746310005 * ser / x);
}

double betacf(double a, double b, double x) {
  constexpr int kMaxIt = 200;
  constexpr double kEps = 3e-14, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIt; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt =
      std::exp(gammln(a + b) - gammln(a) - gammln(b) + a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

std::vector<double> differences(const std::vector<double>& predicted,
                                const std::vector<double>& ground_truth, bool wrap_rotation) {
  check(predicted.size() == ground_truth.size(), "metrics: pred/gt size mismatch");
  std::vector<double> d(predicted.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double diff = predicted[i] - ground_truth[i];
    d[i] = wrap_rotation ? wrap_angle(diff) : diff;
  }
  return d;
}

}  // namespace

double iou_class(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred, int cls) {
  std::size_t inter = 0, gc = 0, pc = 0;
  count_class(gt, pred, cls, inter, gc, pc);
  const double uni = static_cast<double>(gc + pc - inter);
  return static_cast<double>(inter) / (uni + kDenomGuard);
}

double dice_class(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred, int cls) {
  std::size_t inter = 0, gc = 0, pc = 0;
  count_class(gt, pred, cls, inter, gc, pc);
  return 2.0 * static_cast<double>(inter) / (static_cast<double>(gc + pc) + kDenomGuard);
}

double weighted_fg_iou(const Tensor<unsigned char>& gt, const Tensor<unsigned char>& pred,
                       const std::vector<int>& fg_classes) {
  std::size_t fg_total = 0;
  std::vector<std::size_t> gt_counts;
  std::vector<double> ious;
  for (int cls : fg_classes) {
    std::size_t inter = 0, gc = 0, pc = 0;
    count_class(gt, pred, cls, inter, gc, pc);
    gt_counts.push_back(gc);
    const double uni = static_cast<double>(gc + pc - inter);
    ious.push_back(static_cast<double>(inter) / (uni + kDenomGuard));
    fg_total += gc;
  }
  if (fg_total == 0)
    throw std::runtime_error("weighted_fg_iou: ground truth has no foreground");
  double acc = 0.0;
  for (std::size_t i = 0; i < ious.size(); ++i)
    acc += (static_cast<double>(gt_counts[i]) / static_cast<double>(fg_total)) * ious[i];
  return acc;
}

double quantile(std::vector<double> values, double p) {
  check(!values.empty(), "quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SummaryStats summarize(std::vector<double> values) {
  check(!values.empty(), "summarize: empty input");
  SummaryStats s;
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  s.iqr = s.q3 - s.q1;
  return s;
}

SuccessCurve success_curve(const std::vector<double>& values) {
  check(!values.empty(), "success_curve: empty input");
  SuccessCurve curve;
  for (int i = 0; i <= 60; ++i) {
    const double t = static_cast<double>(40 + i) / 100.0;
    std::size_t hits = 0;
    for (double v : values) hits += static_cast<std::size_t>(v >= t);
    curve.points.push_back({t, static_cast<double>(hits) / static_cast<double>(values.size())});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    area += 0.5 * (curve.points[i].success + curve.points[i - 1].success) *
            (curve.points[i].threshold - curve.points[i - 1].threshold);
  curve.auc = area / 0.6;
  return curve;
}

Regression regress_params(const std::vector<double>& predicted,
                          const std::vector<double>& ground_truth, bool wrap_rotation) {
  const std::size_t n = predicted.size();
  check(n == ground_truth.size(), "regress_params: size mismatch");
  check(n >= 3, "regress_params: need at least 3 pairs");
  std::vector<double> y(predicted);
  if (wrap_rotation)
    for (std::size_t i = 0; i < n; ++i)
      y[i] = ground_truth[i] + wrap_angle(predicted[i] - ground_truth[i]);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += ground_truth[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = ground_truth[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0) throw std::runtime_error("regress_params: zero variance in ground truth");
  Regression reg;
  reg.slope = sxy / sxx;
  reg.intercept = my - reg.slope * mx;
  reg.r = (syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
  const double nu = static_cast<double>(n - 2);
  const double r2 = std::min(reg.r * reg.r, 1.0);
  if (1.0 - r2 <= 0.0) {
    reg.t_stat = std::numeric_limits<double>::infinity();
    reg.p_value = 0.0;
  } else {
    reg.t_stat = reg.r * std::sqrt(nu / (1.0 - r2));
    reg.p_value = betai(0.5 * nu, 0.5, nu / (nu + reg.t_stat * reg.t_stat));
  }
  reg.significant = reg.p_value < 0.05;
  return reg;
}

BlandAltman bland_altman(const std::vector<double>& predicted,
                         const std::vector<double>& ground_truth, bool wrap_rotation) {
  check(predicted.size() >= 2, "bland_altman: need at least 2 pairs");
  const std::vector<double> d = differences(predicted, ground_truth, wrap_rotation);
  double mean = 0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d.size());
  const double sd = std::sqrt(var);
  BlandAltman ba;
  ba.bias = mean;
  ba.loa_low = mean - 1.96 * sd;
  ba.loa_high = mean + 1.96 * sd;
  std::vector<double> mags(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mags[i] = std::abs(d[i]);
  ba.p95 = quantile(mags, 0.95);
  return ba;
}

}  // namespace omega
