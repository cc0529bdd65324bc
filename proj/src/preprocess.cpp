#include "omega/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace omega {

namespace {

template <typename T>
Tensor<T> crop_pad_impl(const Tensor<T>& img, int target, T fill) {
  check(img.ndim() == 2, "crop_or_pad: expected 2-D image");
  const int h = img.dim(0), w = img.dim(1);
  Tensor<T> out = Tensor<T>::full({target, target}, fill);
  // source top-left in input coordinates of the output window
  const int oy = (h - target) / 2;
  const int ox = (w - target) / 2;
  for (int y = 0; y < target; ++y) {
    const int sy = y + oy;
    if (sy < 0 || sy >= h) continue;
    for (int x = 0; x < target; ++x) {
      const int sx = x + ox;
      if (sx < 0 || sx >= w) continue;
      out.data[static_cast<std::size_t>(y) * target + x] =
          img.data[static_cast<std::size_t>(sy) * w + sx];
    }
  }
  return out;
}

// separable truncated gaussian, weights renormalized at the borders so a
// constant image blurs to itself
void blur_axis(const std::vector<double>& kernel, int radius, const Tensor<double>& in,
               Tensor<double>& out, bool rows) {
  const int h = in.dim(0), w = in.dim(1);
  const int extent = rows ? w : h;
  const int lines = rows ? h : w;
  for (int line = 0; line < lines; ++line)
    for (int i = 0; i < extent; ++i) {
      double acc = 0.0, wsum = 0.0;
      const int k0 = std::max(-radius, -i), k1 = std::min(radius, extent - 1 - i);
      for (int k = k0; k <= k1; ++k) {
        const double kw = kernel[static_cast<std::size_t>(k + radius)];
        const int j = i + k;
        acc += kw * (rows ? in.data[static_cast<std::size_t>(line) * w + j]
                          : in.data[static_cast<std::size_t>(j) * w + line]);
        wsum += kw;
      }
      const double v = acc / wsum;
      if (rows)
        out.data[static_cast<std::size_t>(line) * w + i] = v;
      else
        out.data[static_cast<std::size_t>(i) * w + line] = v;
    }
}

}  // namespace

Tensor<double> crop_or_pad(const Tensor<double>& img, int target) {
  return crop_pad_impl(img, target, 0.0);
}

Tensor<unsigned char> crop_or_pad_labels(const Tensor<unsigned char>& labels, int target) {
  return crop_pad_impl(labels, target, static_cast<unsigned char>(0));
}

Tensor<double> illumination_estimate(const Tensor<double>& img) {
  check(img.ndim() == 2, "illumination_estimate: expected 2-D image");
  const double sigma = static_cast<double>(img.dim(1)) / 8.0;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int k = -radius; k <= radius; ++k)
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * (k / sigma) * (k / sigma));
  Tensor<double> tmp(img.shape), out(img.shape);
  blur_axis(kernel, radius, img, tmp, true);
  blur_axis(kernel, radius, tmp, out, false);
  return out;
}

Tensor<double> histogram_equalize(const Tensor<double>& img) {
  double lo = img.data[0], hi = img.data[0];
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) return img;  // constant: nothing to equalize
  constexpr int kBins = 256;
  std::vector<std::size_t> hist(kBins, 0);
  const double scale = kBins / (hi - lo);
  auto bin_of = [&](double v) {
    int b = static_cast<int>((v - lo) * scale);
    return std::min(kBins - 1, std::max(0, b));
  };
  for (double v : img.data) hist[static_cast<std::size_t>(bin_of(v))]++;
  std::vector<double> cdf(kBins, 0.0);
  std::size_t run = 0;
  for (int b = 0; b < kBins; ++b) {
    run += hist[static_cast<std::size_t>(b)];
    cdf[static_cast<std::size_t>(b)] = static_cast<double>(run) / static_cast<double>(img.numel());
  }
  Tensor<double> out(img.shape);
  for (std::size_t i = 0; i < img.numel(); ++i) out.data[i] = cdf[static_cast<std::size_t>(bin_of(img.data[i]))];
  return out;
}

PreprocessResult preprocess(const Tensor<double>& raw, int target) {
  PreprocessResult res;
  Tensor<double> img = crop_or_pad(raw, target);
  Tensor<double> illum = illumination_estimate(img);
  for (std::size_t i = 0; i < img.numel(); ++i) img.data[i] /= std::max(illum.data[i], 1e-3);
  img = histogram_equalize(img);
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.numel());
  double var = 0.0;
  for (double v : img.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(img.numel());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    res.image = Tensor<double>::zeros(img.shape);
    res.constant_input = true;
    return res;
  }
  for (double& v : img.data) v = (v - mean) / sd;
  res.image = std::move(img);
  return res;
}

}  // namespace omega
