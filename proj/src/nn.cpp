#include "omega/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace omega {

double LrSchedule::at(int epoch) const {
  check(epoch >= 0, "lr_at: epoch must be >= 0");
  double rate = initial;
  for (int k = 0; k < epoch / period; ++k) rate *= factor;
  return rate;
}

template <typename T>
Tensor<T> orthogonal_init(const std::vector<int>& shape, Rng& rng) {
  check(!shape.empty(), "orthogonal_init: empty shape");
  const std::size_t total = Tensor<double>::count(shape);
  check(total > 0, "orthogonal_init: zero-sized shape");
  const int rows = shape[0];
  const int cols = static_cast<int>(total / static_cast<std::size_t>(rows));
  check(rows > 0 && cols > 0, "orthogonal_init: zero-sized shape");

  const bool wide = rows <= cols;  // orthonormalize the smaller side
  const int r = wide ? rows : cols;
  const int c = wide ? cols : rows;

  // r orthonormal vectors of length c via modified Gram-Schmidt with one
  // re-orthogonalization pass
  std::vector<std::vector<double>> q(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    std::vector<double> v(static_cast<std::size_t>(c));
    while (true) {
      for (double& x : v) x = rng.gaussian();
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < i; ++j) {
          double dot = 0.0;
          for (int k = 0; k < c; ++k) dot += v[k] * q[j][k];
          for (int k = 0; k < c; ++k) v[k] -= dot * q[j][k];
        }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (double& x : v) x /= norm;
        break;
      }
    }
    q[static_cast<std::size_t>(i)] = std::move(v);
  }

  Tensor<T> out(shape);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double v = wide ? q[i][j] : q[j][i];
      out.data[static_cast<std::size_t>(i) * cols + j] = static_cast<T>(v);
    }
  return out;
}

template <typename T>
void AdamState<T>::init(const std::vector<ParamRef<T>>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.push_back(Tensor<T>::zeros(p.value->shape));
    v.push_back(Tensor<T>::zeros(p.value->shape));
  }
  step = 0;
}

template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params,
               const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, double lr, double weight_decay) {
  check(params.size() == grads.size(), "adam_step: params/grads size mismatch");
  if (!state.initialized()) state.init(params);
  check(state.m.size() == params.size(), "adam_step: state size mismatch");
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& p = *params[pi].value;
    const Tensor<T>& g = *grads[pi];
    check(p.same_shape(g), "adam_step: gradient shape mismatch for " + params[pi].name);
    Tensor<T>& mt = state.m[pi];
    Tensor<T>& vt = state.v[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gd = static_cast<double>(g.data[i]);
      if (!std::isfinite(gd))
        throw std::runtime_error("adam_step: non-finite gradient for parameter " + params[pi].name);
      double pv = static_cast<double>(p.data[i]);
      pv -= lr * weight_decay * pv;
      double md = b1 * static_cast<double>(mt.data[i]) + (1.0 - b1) * gd;
      double vd = b2 * static_cast<double>(vt.data[i]) + (1.0 - b2) * gd * gd;
      mt.data[i] = static_cast<T>(md);
      vt.data[i] = static_cast<T>(vd);
      const double mhat = md / bc1;
      const double vhat = vd / bc2;
      pv -= lr * mhat / (std::sqrt(vhat) + eps);
      p.data[i] = static_cast<T>(pv);
    }
  }
}

template Tensor<float> orthogonal_init<float>(const std::vector<int>&, Rng&);
template Tensor<double> orthogonal_init<double>(const std::vector<int>&, Rng&);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(const std::vector<ParamRef<float>>&,
                               const std::vector<const Tensor<float>*>&,
                               AdamState<float>&, double, double);
template void adam_step<double>(const std::vector<ParamRef<double>>&,
                                const std::vector<const Tensor<double>*>&,
                                AdamState<double>&, double, double);

}  // namespace omega
