#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omega/dataset.hpp"
#include "omega/omega_net.hpp"

namespace omega {

struct TrainOptions {
  std::string dataset_dir;
  std::string out_dir;
  NetworkConfig net;
  int epochs = 16;
  int batch_size = 8;
  std::uint64_t seed = 42;
  double weight_decay = 1e-4;
  AugmentRanges aug;
  bool use_double = false;  // training runs single precision unless asked
  bool resume = false;
  int only_fold = -1;  // train just one held-out fold; -1 trains all
};

struct FoldArtifacts {
  int test_fold = 0;
  std::string checkpoint_path;
  std::string log_path;
};

// Trains one model per fold combination (train on k-1 folds, hold out one).
// Writes ckpt_fold<f>.ckpt, ckpt_fold<f>_last.ckpt (+ _opt sidecar) and
// train_log_fold<f>.csv under out_dir.
std::vector<FoldArtifacts> train_command(const TrainOptions& opts);

// Per-sample training input, after augmentation and preprocessing.
template <typename T>
struct PreparedSample {
  Tensor<T> image;             // [1,1,H,W]
  Tensor<T> initial_onehot;    // [1,K,H,W]
  Tensor<T> canonical_onehot;  // [1,K,H,W]
  RigidParams gt;
};

template <typename T>
PreparedSample<T> prepare_training_sample(const Sample& s, Rng& aug_rng,
                                          const AugmentRanges& aug, int image_size,
                                          int num_classes, bool want_canonical);

}  // namespace omega
