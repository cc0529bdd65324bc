#pragma once

#include <array>
#include <string>
#include <vector>

#include "omega/dataset.hpp"
#include "omega/metrics.hpp"
#include "omega/omega_net.hpp"

namespace omega {

struct EvalOptions {
  std::string dataset_dir;
  std::string checkpoint_path;
  std::string out_dir;
  int fold_override = -1;  // must not intersect the training folds
  bool use_double = false;
  bool write_svg = true;
};

struct EvalRecord {
  std::string sample_id;
  View view = View::kSA;
  int unet_index = 0;
  std::array<double, 5> iou{};   // classes 1..5
  std::array<double, 5> dice{};
  double wfiou = 0;
  bool wfiou_valid = true;
};

struct EvalResult {
  int test_fold = 0;
  int depth = 0;  // hourglass U-Nets
  std::vector<EvalRecord> records;
  std::vector<SummaryStats> wfiou_by_unet;  // index 0..depth
  SuccessCurve curve;                       // final U-Net
  double failure_rate_at_090 = 0;
  int excluded = 0;

  bool has_params = false;
  std::array<std::vector<double>, 4> pred;  // tx, ty, theta, s
  std::array<std::vector<double>, 4> gt;
  std::array<Regression, 4> regression{};
  std::array<BlandAltman, 4> agreement{};
  double median_abs_wrapped_theta_error = 0;
};

// Runs the held-out fold through the checkpointed model, writes
// per_image_metrics.csv, params.csv, curve.csv, summary.txt (and SVG plots)
// into out_dir, and returns the aggregates.
EvalResult evaluate_command(const EvalOptions& opts);

struct PredictOptions {
  std::string dataset_dir;
  std::string checkpoint_path;
  std::string out_dir;
  int limit = -1;  // entries from the held-out fold; -1 = all
  bool use_double = false;
};

// Writes predicted params.csv and one label PGM per U-Net index.
void predict_command(const PredictOptions& opts);

}  // namespace omega
