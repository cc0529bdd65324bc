#pragma once

#include <array>
#include <cmath>

#include "omega/tensor.hpp"

namespace omega {

// Similarity-transform parameters: translation in normalized [-1,1]
// coordinates, rotation in radians (counter-clockwise), uniform scale.
struct RigidParams {
  double tx = 0.0;
  double ty = 0.0;
  double theta = 0.0;
  double s = 1.0;
};

// 3x3 homogeneous matrix, row-major, last row (0,0,1) for similarities.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  void apply(double x, double y, double& ox, double& oy) const {
    ox = m[0] * x + m[1] * y + m[2];
    oy = m[3] * x + m[4] * y + m[5];
  }
};

// wrap(.) = mod(. + pi, 2pi) - pi, result in [-pi, pi)
inline double wrap_angle(double x) {
  return x - 2.0 * M_PI * std::floor((x + M_PI) / (2.0 * M_PI));
}

Mat3 mat_mul(const Mat3& a, const Mat3& b);
Mat3 mat_identity();

// Inverse of a similarity matrix; throws on degenerate scale.
Mat3 mat_inverse_similarity(const Mat3& m);

// S*R*T for the full transform, or the partial stages T and R*T.
enum class ComposeStage { kT, kRT, kSRT };
Mat3 compose_similarity(const RigidParams& p);
Mat3 compose_similarity_stage(const RigidParams& p, ComposeStage stage);

// Recovers (tx, ty, theta, s) from a similarity matrix; throws if the matrix
// is degenerate (s <= 1e-12) or not a similarity.
RigidParams decompose_similarity(const Mat3& m);

// Resamples a single-channel image over the canonical grid transformed by M
// (bilinear kernel, zero outside the image).
Tensor<double> warp_image_bilinear(const Tensor<double>& img, const Mat3& m,
                                   int out_h, int out_w);

// Same transform for integer label maps, nearest-neighbor, 0 outside.
Tensor<unsigned char> warp_labels_nearest(const Tensor<unsigned char>& labels,
                                          const Mat3& m, int out_h, int out_w);

}  // namespace omega
