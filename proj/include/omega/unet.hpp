#pragma once

#include <array>
#include <string>
#include <vector>

#include "omega/graph.hpp"
#include "omega/nn.hpp"

namespace omega {

struct UNetConfig {
  int depth = 3;         // pooling levels
  int base_filters = 8;  // channels at the top level, doubling per level
  int in_channels = 1;
  int num_classes = 6;
};

// Parameter tensors carry the index they were given during registration so
// forward passes can find their placed graph leaves.
template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [F,C,3,3]
  Tensor<T> bias;    // [F]
  int idx = -1;      // weight at idx, bias at idx+1
};

template <typename T>
struct BnParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;
  int idx = -1;  // gamma at idx, beta at idx+1
};

// conv3x3 -> batchnorm -> relu
template <typename T>
struct ConvBlock {
  ConvParams<T> conv;
  BnParams<T> bn;
};

template <typename T>
struct FcParams {
  Tensor<T> weight;  // [O,I]
  Tensor<T> bias;    // [O]
  int idx = -1;
};

// All model parameters placed as leaves on a graph, in registration order.
template <typename T>
using PlacedVars = std::vector<Var>;

template <typename T>
PlacedVars<T> place_params(Graph<T>& g, const std::vector<ParamRef<T>>& refs,
                           bool requires_grad);

template <typename T>
struct UNetParams {
  UNetConfig config;
  std::vector<std::array<ConvBlock<T>, 2>> down;  // one pair per level
  ConvBlock<T> mid_a, mid_b;                      // most down-sampled double conv
  std::vector<ConvParams<T>> up;                  // index = level, applied deepest first
  ConvParams<T> head;                             // projection to num_classes

  void init(const UNetConfig& cfg, Rng& rng);
  void register_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
};

template <typename T>
struct UNetOutput {
  Var logits;
  Var probs;
  Var bottleneck;
};

// conv -> bn -> relu
template <typename T>
Var conv_block_forward(Graph<T>& g, Var x, ConvBlock<T>& blk, const PlacedVars<T>& placed);

template <typename T>
UNetOutput<T> unet_forward(Graph<T>& g, Var image, UNetParams<T>& params,
                           const PlacedVars<T>& placed);

}  // namespace omega
