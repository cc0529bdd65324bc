#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "omega/tensor.hpp"

namespace omega {

// Handle to a node in a Graph. Valid only for the graph that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Per-channel batch-normalization running statistics, owned by the layer
// parameters and updated by training-mode forward passes.
template <typename T>
struct BatchNormState {
  Tensor<T> mean;
  Tensor<T> var;
  long updates = 0;

  explicit BatchNormState(int channels = 0)
      : mean(Tensor<T>::zeros({channels})), var(Tensor<T>::full({channels}, T(1))) {}
};

enum class TransformStage { kTranslation, kRotationTranslation, kFull };

// Reverse-mode tape. Operations execute eagerly and, when recording is
// enabled, push a backward closure. backward() visits nodes in exact reverse
// creation order, which is a valid reverse topological order for an eagerly
// built graph. A graph is single-writer and may be differentiated once.
template <typename T>
class Graph {
 public:
  enum class Mode { kTrain, kInfer };

  explicit Graph(Mode mode = Mode::kInfer, bool record = true)
      : mode_(mode), record_(record) {}

  Mode mode() const { return mode_; }
  bool recording() const { return record_; }

  Var input(Tensor<T> value, bool requires_grad = false);

  // convolution stack
  Var conv2d(Var x, Var weight, Var bias);
  Var maxpool2(Var x);
  Var upsample2(Var x);
  Var batchnorm(Var x, Var gamma, Var beta, BatchNormState<T>* state);
  Var relu(Var x);
  Var softmax_channels(Var x);
  Var concat_channels(Var a, Var b);
  Var fully_connected(Var x, Var weight, Var bias);
  Var global_avg_pool(Var x);

  // elementwise / reductions
  Var add(Var a, Var b);
  Var scale(Var a, T factor);
  Var mean_all(Var a);
  Var mse_mean(Var a, Var b);        // 0.5 * mean((a-b)^2)
  Var dot_const(Var a, const Tensor<T>& weights);

  // losses
  Var cce_loss(Var probs, const Tensor<T>& one_hot_target);

  // spatial transformer
  Var similarity_matrix(Var params, TransformStage stage);   // [N,4] -> [N,6]
  Var transform_grid(Var mats, int out_h, int out_w);        // [N,6] -> [N,2,oh,ow]
  Var bilinear_sample(Var image, Var grid);                  // -> [N,C,oh,ow]
  Var rigid_component_loss(Var params, const Tensor<T>& gt_params, int component);

  void backward(Var loss);

  const Tensor<T>& value(Var v) const;
  const Tensor<T>& grad(Var v) const;
  bool has_grad(Var v) const;

  // Smallest distance to a non-smooth point (ReLU kink, pooling tie,
  // sampler cell boundary, wrap boundary) seen by any recorded op.
  double smooth_margin() const { return margin_; }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void()> backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Tensor<T> value, bool requires_grad);
  void ensure_grad(int id);
  void note_margin(double m) { margin_ = std::min(margin_, m); }

  std::vector<Node> nodes_;
  Mode mode_;
  bool record_;
  bool backward_done_ = false;
  double margin_ = std::numeric_limits<double>::infinity();
};

// The canonical sampling grid: normalized coordinates uniformly spaced over
// [-1,1] inclusive, channel 0 = x (columns), channel 1 = y (rows). Values are
// adjusted by at most a few ulps so that the sampler's pixel mapping
// p = (g+1)(dim-1)/2 reproduces integer pixel centers exactly whenever a
// representable coordinate exists.
std::vector<double> canonical_grid(int h, int w);

// Central-difference gradient check in double precision.
// `build` records a scalar-valued function of x on the given graph.
// Returns max over elements of |analytic - numeric| / max(1,|analytic|,|numeric|).
using GradBuilder = std::function<Var(Graph<double>&, Var)>;
double check_gradient(const GradBuilder& build, const Tensor<double>& x, double eps = 1e-5);

// Draws inputs from `sample` until the recorded function is at least
// `margin` away from every non-smooth point, then runs check_gradient.
double check_gradient_smooth(const GradBuilder& build,
                             const std::function<Tensor<double>()>& sample,
                             double eps = 1e-5, double margin = 1e-3,
                             int max_tries = 64);

}  // namespace omega
