#include "omega/stn.hpp"

#include <cmath>
#include <stdexcept>

#include "omega/graph.hpp"
#include "omega/kernels.hpp"

namespace omega {

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a(r, k) * b(k, c);
      out(r, c) = acc;
    }
  return out;
}

Mat3 mat_identity() { return Mat3{}; }

Mat3 mat_inverse_similarity(const Mat3& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (!(std::abs(det) > 1e-24))
    throw std::runtime_error("mat_inverse_similarity: degenerate matrix");
  const double i00 = m(1, 1) / det, i01 = -m(0, 1) / det;
  const double i10 = -m(1, 0) / det, i11 = m(0, 0) / det;
  Mat3 out;
  out(0, 0) = i00;
  out(0, 1) = i01;
  out(0, 2) = -(i00 * m(0, 2) + i01 * m(1, 2));
  out(1, 0) = i10;
  out(1, 1) = i11;
  out(1, 2) = -(i10 * m(0, 2) + i11 * m(1, 2));
  out(2, 0) = 0.0;
  out(2, 1) = 0.0;
  out(2, 2) = 1.0;
  return out;
}

Mat3 compose_similarity_stage(const RigidParams& p, ComposeStage stage) {
  const double c = std::cos(p.theta), sn = std::sin(p.theta);
  Mat3 out;
  switch (stage) {
    case ComposeStage::kT:
      out(0, 0) = 1.0;
      out(0, 1) = 0.0;
      out(0, 2) = p.tx;
      out(1, 0) = 0.0;
      out(1, 1) = 1.0;
      out(1, 2) = p.ty;
      break;
    case ComposeStage::kRT:
      out(0, 0) = c;
      out(0, 1) = -sn;
      out(0, 2) = c * p.tx - sn * p.ty;
      out(1, 0) = sn;
      out(1, 1) = c;
      out(1, 2) = sn * p.tx + c * p.ty;
      break;
    case ComposeStage::kSRT:
      out(0, 0) = p.s * c;
      out(0, 1) = -p.s * sn;
      out(0, 2) = p.s * (c * p.tx - sn * p.ty);
      out(1, 0) = p.s * sn;
      out(1, 1) = p.s * c;
      out(1, 2) = p.s * (sn * p.tx + c * p.ty);
      break;
  }
  return out;
}

Mat3 compose_similarity(const RigidParams& p) {
  return compose_similarity_stage(p, ComposeStage::kSRT);
}

RigidParams decompose_similarity(const Mat3& m) {
  if (std::abs(m(2, 0)) > 1e-9 || std::abs(m(2, 1)) > 1e-9 || std::abs(m(2, 2) - 1.0) > 1e-9)
    throw std::runtime_error("decompose_similarity: last row is not (0,0,1)");
  const double c0 = std::hypot(m(0, 0), m(1, 0));
  const double c1 = std::hypot(m(0, 1), m(1, 1));
  if (c0 <= 1e-12) throw std::runtime_error("decompose_similarity: degenerate scale");
  const double dot = m(0, 0) * m(0, 1) + m(1, 0) * m(1, 1);
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double tol = 1e-6 * std::max(1.0, c0 * c0);
  if (std::abs(c0 - c1) > 1e-6 * std::max(1.0, c0) || std::abs(dot) > tol || det <= 0.0)
    throw std::runtime_error("decompose_similarity: not a similarity matrix");
  RigidParams p;
  p.s = c0;
  p.theta = wrap_angle(std::atan2(m(1, 0), m(0, 0)));
  // t = (s R)^-1 * translation column = R^T * t_col / s
  const double cs = std::cos(p.theta), sn = std::sin(p.theta);
  p.tx = (cs * m(0, 2) + sn * m(1, 2)) / p.s;
  p.ty = (-sn * m(0, 2) + cs * m(1, 2)) / p.s;
  return p;
}

Tensor<double> warp_image_bilinear(const Tensor<double>& img, const Mat3& m,
                                   int out_h, int out_w) {
  check(img.ndim() == 2, "warp_image_bilinear: expected 2-D image");
  const int h = img.dim(0), w = img.dim(1);
  const std::vector<double> base = canonical_grid(out_h, out_w);
  std::vector<double> grid(base.size());
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (std::size_t i = 0; i < plane; ++i) {
    m.apply(base[i], base[plane + i], grid[i], grid[plane + i]);
  }
  Tensor<double> out({out_h, out_w});
  kernels::bilinear_forward(img.data.data(), grid.data(), out.data.data(),
                            1, 1, h, w, out_h, out_w);
  return out;
}

Tensor<unsigned char> warp_labels_nearest(const Tensor<unsigned char>& labels,
                                          const Mat3& m, int out_h, int out_w) {
  check(labels.ndim() == 2, "warp_labels_nearest: expected 2-D label map");
  const int h = labels.dim(0), w = labels.dim(1);
  const std::vector<double> base = canonical_grid(out_h, out_w);
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  const double ax = 0.5 * (w - 1), ay = 0.5 * (h - 1);
  Tensor<unsigned char> out({out_h, out_w});
  for (std::size_t i = 0; i < plane; ++i) {
    double gx, gy;
    m.apply(base[i], base[plane + i], gx, gy);
    const double px = (gx + 1.0) * ax;
    const double py = (gy + 1.0) * ay;
    const long x = std::lround(px), y = std::lround(py);
    out.data[i] = (x >= 0 && x < w && y >= 0 && y < h)
                      ? labels.data[static_cast<std::size_t>(y) * w + x]
                      : static_cast<unsigned char>(0);
  }
  return out;
}

}  // namespace omega
