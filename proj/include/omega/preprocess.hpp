#pragma once

#include "omega/tensor.hpp"

namespace omega {

struct PreprocessResult {
  Tensor<double> image;
  bool constant_input = false;  // standardization guard fired, output is all zeros
};

// Center-crop or symmetric zero-pad to target x target.
Tensor<double> crop_or_pad(const Tensor<double>& img, int target);
Tensor<unsigned char> crop_or_pad_labels(const Tensor<unsigned char>& labels, int target);

// Gaussian-blur illumination estimate, sigma = width/8, clamped >= 1e-3.
Tensor<double> illumination_estimate(const Tensor<double>& img);

// Global 256-bin histogram equalization onto [0,1].
Tensor<double> histogram_equalize(const Tensor<double>& img);

// Full pipeline: crop/pad, divide by illumination estimate, equalize,
// standardize to zero mean / unit std (all-zero output when the input is
// constant).
PreprocessResult preprocess(const Tensor<double>& raw, int target);

}  // namespace omega
