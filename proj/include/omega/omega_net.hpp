#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omega/checkpoint.hpp"
#include "omega/stn.hpp"
#include "omega/unet.hpp"

namespace omega {

struct NetworkConfig {
  char variant = 'B';  // A: initial U-Net only; B/C/D: 1/2/3 hourglass U-Nets
  UNetConfig unet;     // in_channels applies to the initial U-Net
  int image_size = 64;
  double alpha1 = 100.0;
  double alpha2 = 100.0;
  double alpha3 = 0.1;
  double alpha4 = 1.0;

  int hourglass_depth() const;  // A->0 ... D->3
};

template <typename T>
struct LocNetParams {
  ConvBlock<T> c1, c2;  // conv-bn-relu-pool twice
  FcParams<T> fc1, fc2; // hidden width 64, then 4 linear outputs
  void init(int in_channels, Rng& rng);
  void register_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
};

template <typename T>
struct OmegaNet {
  NetworkConfig config;
  UNetParams<T> initial;
  LocNetParams<T> locnet;               // present for variants B-D
  std::vector<UNetParams<T>> hourglass; // hourglass_depth() entries

  std::vector<ParamRef<T>> refs;  // all trainable tensors, registration order
  std::vector<std::pair<std::string, BatchNormState<T>*>> bn_states;

  void init(const NetworkConfig& cfg, Rng& rng);

  Checkpoint to_checkpoint() const;
  void from_checkpoint(const Checkpoint& ckpt);  // throws on mismatch
};

// Component losses, as doubles for logging. total follows
// alpha1*L_SU + alpha2*(mat) + alpha3*(img) + alpha4*sum(hourglass).
struct LossBreakdown {
  double l_su = 0;
  double l_tx = 0, l_ty = 0, l_theta = 0, l_s = 0;
  double l_it = 0, l_itheta = 0, l_is = 0;
  std::vector<double> l_sh;
  bool has_transformer = false;
  double total = 0;
};

// Weighted assembly of the components; throws on a non-finite component,
// naming it.
double omega_total_loss(LossBreakdown& comp, const NetworkConfig& cfg);

template <typename T>
struct TrainTargets {
  Tensor<T> initial_onehot;    // [N,K,H,W], observed frame
  Tensor<T> canonical_onehot;  // [N,K,H,W], gt-warped frame (hourglass target)
  Tensor<T> gt_params;         // [N,4]
};

template <typename T>
struct ForwardTrace {
  UNetOutput<T> initial;
  Var params_pred;   // [N,4]; invalid for variant A
  Var warped_image;  // I' = trans(I, SRT_pred); invalid for variant A
  std::vector<UNetOutput<T>> hourglass;
  Var total_loss;    // valid when targets were given
  LossBreakdown losses;
};

// Records the full network on the graph. `targets` enables the loss head
// (training); without it only predictions are produced.
template <typename T>
ForwardTrace<T> omega_forward(Graph<T>& g, OmegaNet<T>& net, const PlacedVars<T>& placed,
                              const Tensor<T>& images, const TrainTargets<T>* targets);

template <typename T>
Var locnet_forward(Graph<T>& g, Var bottleneck, LocNetParams<T>& params,
                   const PlacedVars<T>& placed);

// argmax over channels -> label map for batch item n
template <typename T>
Tensor<unsigned char> argmax_labels(const Tensor<T>& probs, int n);

template <typename T>
Tensor<T> onehot_labels(const Tensor<unsigned char>& labels, int num_classes);

}  // namespace omega
