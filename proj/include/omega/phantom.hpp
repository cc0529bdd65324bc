#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omega/rng.hpp"
#include "omega/stn.hpp"
#include "omega/tensor.hpp"

namespace omega {

// Label classes: 0 background, 1 LV myocardium, 2 LV bloodpool,
// 3 RV bloodpool, 4 left atrium, 5 right atrium.
constexpr int kNumClasses = 6;

enum class View { kSA = 0, kHLA = 1, kVLA = 2 };

std::string view_name(View v);
View view_from_name(const std::string& name);

// Classes visible per imaging plane.
const std::vector<int>& view_foreground_classes(View v);

struct Sample {
  Tensor<double> image;          // H x W raw intensities
  Tensor<unsigned char> labels;  // H x W class indices
  RigidParams gt;
  View view = View::kSA;
  int subject_id = 0;
  int frame_id = 0;
};

// Renders one phantom frame. The canonical scene (nested-ellipse cardiac
// layout for the view, with per-subject shape jitter, additive sinusoidal
// texture and a smooth multiplicative illumination field) is evaluated at
// inverse-transformed coordinates, so that resampling the result with
// compose(params) recovers the canonical pose. Labels are evaluated
// analytically in the observed frame; no resampling is involved.
// `slice` selects the SA level (0 basal, 1 equatorial, 2 apical); it is
// ignored for long-axis views. Throws if params are outside the generator
// ranges t in [-0.25,0.25], theta in [-pi,pi), s in [0.5,1].
Sample generate_phantom(std::uint64_t subject_seed, View view, int slice, int frame,
                        const RigidParams& params, int size);

struct AugmentRanges {
  double translate = 0.15;       // normalized coordinates
  double rotate_deg = 15.0;
  double scale_delta = 0.15;     // scale factor in [1-d, 1+d]
};

// Warps image (bilinear) and labels (nearest) by a random similarity and
// re-derives the ground-truth parameters so the canonicalization round trip
// is preserved. A draw of exactly identity returns the sample unchanged.
Sample augment(const Sample& in, Rng& rng, const AugmentRanges& ranges);

// Greedy largest-first bin packing of subjects into k folds by image count.
// Returns fold index per subject, aligned with `counts` order.
std::vector<int> partition_folds(const std::vector<int>& counts, int k, std::uint64_t seed);

}  // namespace omega
