#include "omega/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "omega/graph.hpp"

namespace omega {

std::string view_name(View v) {
  switch (v) {
    case View::kSA: return "SA";
    case View::kHLA: return "HLA";
    case View::kVLA: return "VLA";
  }
  return "?";
}

View view_from_name(const std::string& name) {
  if (name == "SA") return View::kSA;
  if (name == "HLA") return View::kHLA;
  if (name == "VLA") return View::kVLA;
  throw std::runtime_error("unknown view: " + name);
}

const std::vector<int>& view_foreground_classes(View v) {
  static const std::vector<int> sa{1, 2, 3};
  static const std::vector<int> hla{1, 2, 3, 4, 5};
  static const std::vector<int> vla{1, 2, 4};
  switch (v) {
    case View::kSA: return sa;
    case View::kHLA: return hla;
    case View::kVLA: return vla;
  }
  return hla;
}

namespace {

struct Ellipse {
  double cx = 0, cy = 0;
  double rx = 0.1, ry = 0.1;
  double angle = 0.0;

  // implicit value: <=1 inside
  double q(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return u * u + v * v;
  }
};

struct Structure {
  int cls = 0;
  Ellipse shape;
  double intensity = 0.5;
};

// Full per-frame scene description in canonical coordinates.
struct Scene {
  std::vector<Structure> paint;  // painted in order; later entries on top
  double bg_intensity = 0.06;
  // texture: sum of sinusoids a*sin(fx*x + fy*y + ph)
  struct Wave {
    double a, fx, fy, ph;
  };
  std::vector<Wave> waves;
  double illum_gx = 0, illum_gy = 0;  // illum = 1 + gx*x + gy*y

  double intensity(double x, double y) const {
    double v = bg_intensity;
    constexpr double kEdge = 0.12;  // softness in implicit-q units
    for (const auto& st : paint) {
      const double q = st.shape.q(x, y);
      double alpha = (1.0 - q) / kEdge + 0.5;
      alpha = std::min(1.0, std::max(0.0, alpha));
      v = v + alpha * (st.intensity - v);
    }
    double tex = 0.0;
    for (const auto& wv : waves) tex += wv.a * std::sin(wv.fx * x + wv.fy * y + wv.ph);
    const double illum = 1.0 + illum_gx * x + illum_gy * y;
    return std::max(0.0, (v + tex) * illum);
  }

  unsigned char label(double x, double y) const {
    // later-painted structures win; the bloodpool hole punches the ring
    for (auto it = paint.rbegin(); it != paint.rend(); ++it)
      if (it->shape.q(x, y) <= 1.0) return static_cast<unsigned char>(it->cls);
    return 0;
  }
};

Scene build_scene(std::uint64_t subject_seed, View view, int slice, int frame) {
  Rng rng(stream_seed(subject_seed, "anatomy"));
  const double size_jit = rng.uniform(0.92, 1.08);
  const double wall_jit = rng.uniform(0.9, 1.1);
  const double cx_jit = rng.uniform(-0.03, 0.03);
  const double cy_jit = rng.uniform(-0.03, 0.03);
  const double int_jit[4] = {rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                             rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04)};

  // cardiac phase: bloodpools contract, wall thickens
  const double phase = 0.5 - 0.5 * std::cos(2.0 * M_PI * (frame % 8) / 8.0);
  const double contract = 1.0 - 0.16 * phase;
  const double thicken = 1.0 + 0.30 * phase;
  const double chamber = 1.0 - 0.08 * phase;

  const double i_myo = 0.30 + int_jit[0];
  const double i_lv = 0.92 + int_jit[1];
  const double i_rv = 0.72 + int_jit[2];
  const double i_la = 0.55 + int_jit[3];
  const double i_ra = 0.44 + int_jit[3] * 0.5;

  Scene sc;
  if (view == View::kSA) {
    const double base_r[3] = {0.285, 0.255, 0.21};
    const double r = base_r[std::min(2, std::max(0, slice))] * size_jit;
    const double wall = 0.10 * wall_jit * thicken;
    Ellipse bp{0.05 + cx_jit, 0.02 + cy_jit, r * contract, 0.93 * r * contract, 0.15};
    Ellipse myo{bp.cx, bp.cy, bp.rx + wall, bp.ry + wall, bp.angle};
    Ellipse rv{bp.cx - (myo.rx + 0.085), bp.cy - 0.02, 0.13 * size_jit, 0.20 * size_jit * chamber, 0.35};
    sc.paint.push_back({3, rv, i_rv});
    sc.paint.push_back({1, myo, i_myo});
    sc.paint.push_back({2, bp, i_lv});
    
  } else if (view == View::kHLA) {
    const double wall = 0.085 * wall_jit * thicken;
    Ellipse bp{-0.16 + cx_jit, -0.14 + cy_jit, 0.16 * size_jit * contract,
               0.235 * size_jit * contract, -0.28};
    Ellipse myo{bp.cx, bp.cy, bp.rx + wall, bp.ry + wall, bp.angle};
    Ellipse rv{0.24 + cx_jit, -0.15 + cy_jit, 0.145 * size_jit, 0.21 * size_jit * chamber, 0.22};
    Ellipse la{-0.17 + cx_jit, 0.27 + cy_jit, 0.13 * size_jit, 0.145 * size_jit / chamber, 0.1};
    Ellipse ra{0.24 + cx_jit, 0.28 + cy_jit, 0.14 * size_jit, 0.15 * size_jit / chamber, -0.1};
    sc.paint.push_back({5, ra, i_ra});
    sc.paint.push_back({4, la, i_la});
    sc.paint.push_back({3, rv, i_rv});
    sc.paint.push_back({1, myo, i_myo});
    sc.paint.push_back({2, bp, i_lv});
    
  } else {
    const double wall = 0.085 * wall_jit * thicken;
    Ellipse bp{-0.04 + cx_jit, -0.14 + cy_jit, 0.175 * size_jit * contract,
               0.255 * size_jit * contract, 0.24};
    Ellipse myo{bp.cx, bp.cy, bp.rx + wall, bp.ry + wall, bp.angle};
    Ellipse la{0.10 + cx_jit, 0.27 + cy_jit, 0.135 * size_jit, 0.14 * size_jit / chamber, -0.15};
    sc.paint.push_back({4, la, i_la});
    sc.paint.push_back({1, myo, i_myo});
    sc.paint.push_back({2, bp, i_lv});
    
  }

  Rng trng(stream_seed(subject_seed, "texture"));
  for (int i = 0; i < 3; ++i) {
    const double amp = trng.uniform(0.015, 0.03);
    const double freq = trng.uniform(5.0, 14.0);
    const double dir = trng.uniform(0.0, 2.0 * M_PI);
    sc.waves.push_back({amp, freq * std::cos(dir), freq * std::sin(dir),
                        trng.uniform(0.0, 2.0 * M_PI)});
  }
  sc.waves.push_back({0.012, 27.0 * std::cos(trng.uniform(0.0, M_PI)),
                      27.0 * std::sin(trng.uniform(0.0, M_PI)), trng.uniform(0.0, 2.0 * M_PI)});
  const double gmag = trng.uniform(0.08, 0.2);
  const double gdir = trng.uniform(0.0, 2.0 * M_PI);
  sc.illum_gx = gmag * std::cos(gdir);
  sc.illum_gy = gmag * std::sin(gdir);
  return sc;
}

}  // namespace

Sample generate_phantom(std::uint64_t subject_seed, View view, int slice, int frame,
                        const RigidParams& params, int size) {
  check(params.tx >= -0.25 && params.tx <= 0.25 && params.ty >= -0.25 && params.ty <= 0.25,
        "generate_phantom: translation outside [-0.25, 0.25]");
  check(params.theta >= -M_PI && params.theta < M_PI,
        "generate_phantom: rotation outside [-pi, pi)");
  check(params.s >= 0.5 && params.s <= 1.0, "generate_phantom: scale outside [0.5, 1.0]");

  const Scene scene = build_scene(subject_seed, view, slice, frame);
  const Mat3 inv = mat_inverse_similarity(compose_similarity(params));

  Sample out;
  out.view = view;
  out.frame_id = frame;
  out.gt = params;
  out.image = Tensor<double>({size, size});
  out.labels = Tensor<unsigned char>({size, size});
  const std::vector<double> grid = canonical_grid(size, size);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (std::size_t i = 0; i < plane; ++i) {
    double x, y;
    inv.apply(grid[i], grid[plane + i], x, y);
    out.image.data[i] = scene.intensity(x, y);
    out.labels.data[i] = scene.label(x, y);
  }
  return out;
}

Sample augment(const Sample& in, Rng& rng, const AugmentRanges& ranges) {
  const double tx = rng.uniform(-ranges.translate, ranges.translate);
  const double ty = rng.uniform(-ranges.translate, ranges.translate);
  const double th = rng.uniform(-ranges.rotate_deg, ranges.rotate_deg) * M_PI / 180.0;
  const double sc = rng.uniform(1.0 - ranges.scale_delta, 1.0 + ranges.scale_delta);
  if (tx == 0.0 && ty == 0.0 && th == 0.0 && sc == 1.0) return in;

  const RigidParams aug{tx, ty, th, sc};
  const Mat3 a = compose_similarity(aug);
  const int h = in.image.dim(0), w = in.image.dim(1);
  Sample out;
  out.view = in.view;
  out.subject_id = in.subject_id;
  out.frame_id = in.frame_id;
  out.image = warp_image_bilinear(in.image, a, h, w);
  out.labels = warp_labels_nearest(in.labels, a, h, w);
  out.gt = decompose_similarity(mat_mul(mat_inverse_similarity(a), compose_similarity(in.gt)));
  return out;
}

std::vector<int> partition_folds(const std::vector<int>& counts, int k, std::uint64_t seed) {
  const int n = static_cast<int>(counts.size());
  check(k >= 2, "partition_folds: k must be >= 2");
  check(n >= k, "partition_folds: fewer subjects than folds");
  std::vector<int> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  // deterministic shuffle so equal-count subjects land in a seed-dependent
  // order, then stable sort largest-first
  Rng rng(stream_seed(seed, "folds"));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)))]);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)]; });
  std::vector<long> load(static_cast<std::size_t>(k), 0);
  std::vector<int> fold(counts.size(), -1);
  for (int idx : order) {
    int best = 0;
    for (int f = 1; f < k; ++f)
      if (load[static_cast<std::size_t>(f)] < load[static_cast<std::size_t>(best)]) best = f;
    fold[static_cast<std::size_t>(idx)] = best;
    load[static_cast<std::size_t>(best)] += counts[static_cast<std::size_t>(idx)];
  }
  return fold;
}

}  // namespace omega
