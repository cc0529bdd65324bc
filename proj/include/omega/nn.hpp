#pragma once

#include <string>
#include <vector>

#include "omega/rng.hpp"
#include "omega/tensor.hpp"

namespace omega {

// Piecewise-constant schedule: rate(e) = initial * factor^floor(e / period).
struct LrSchedule {
  double initial = 0.001;
  double factor = 0.1;
  int period = 26;

  double at(int epoch) const;
};

// Orthogonal initialization, gain 1. The shape is flattened to a 2-D matrix
// (fan-out x fan-in); the orthonormal factor spans the smaller dimension.
// Computed in double and cast, so identical seeds give identical tensors.
template <typename T>
Tensor<T> orthogonal_init(const std::vector<int>& shape, Rng& rng);

// Reference to a named parameter tensor, plus its gradient for the step.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

// Adam first/second moments for an ordered parameter list.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long step = 0;

  void init(const std::vector<ParamRef<T>>& params);
  bool initialized() const { return !m.empty(); }
};

// One Adam update over all parameters, in registration order. Weight decay
// is decoupled: p <- p - lr*wd*p is applied before the Adam delta.
// beta1=0.9, beta2=0.999, eps=1e-8. Throws on non-finite gradients, naming
// the offending parameter.
template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params,
               const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, double lr, double weight_decay);

}  // namespace omega
