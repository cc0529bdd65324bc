#include "omega/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>

#include "omega/kernels.hpp"
#include "omega/stn.hpp"

namespace omega {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kCceClip = 1e-7;
}  // namespace

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  check(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "graph: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  check(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "graph: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Graph<T>::ensure_grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor<T>::zeros(n.value.shape);
    n.grad_alloc = true;
  }
}

template <typename T>
Var Graph<T>::input(Tensor<T> value, bool requires_grad) {
  return push(std::move(value), requires_grad);
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  check(n.grad_alloc, "graph: gradient not available for this var");
  return n.grad;
}

template <typename T>
bool Graph<T>::has_grad(Var v) const {
  return node(v).grad_alloc;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  check(record_, "graph: backward on a non-recording graph");
  check(!backward_done_, "graph: backward called twice without re-recording");
  backward_done_ = true;
  Node& ln = node(loss);
  check(ln.value.numel() == 1, "graph: backward requires a scalar loss");
  ensure_grad(loss.id);
  ln.grad.data[0] = T(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_alloc && n.backward) n.backward();
  }
}

// ---------------------------------------------------------------------------
// convolution stack

template <typename T>
Var Graph<T>::conv2d(Var x, Var weight, Var bias) {
  const Tensor<T>& xv = node(x).value;
  const Tensor<T>& wv = node(weight).value;
  const Tensor<T>& bv = node(bias).value;
  check(xv.ndim() == 4, "conv2d: input must be [N,C,H,W]");
  check(wv.ndim() == 4 && wv.dim(2) == 3 && wv.dim(3) == 3, "conv2d: kernel must be [F,C,3,3]");
  check(wv.dim(1) == xv.dim(1), "conv2d: channel mismatch between input and kernel");
  check(bv.ndim() == 1 && bv.dim(0) == wv.dim(0), "conv2d: bias must be [F]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3), f = wv.dim(0);
  Tensor<T> out({n, f, h, w});
  kernels::conv2d_forward(xv.data.data(), wv.data.data(), bv.data.data(), out.data.data(),
                          n, c, h, w, f);
  bool rg = node(x).requires_grad || node(weight).requires_grad || node(bias).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, weight, bias, o, n, c, h, w, f]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (nodes_[x.id].requires_grad) {
        ensure_grad(x.id);
        kernels::conv2d_backward_input(g.data.data(), nodes_[weight.id].value.data.data(),
                                       nodes_[x.id].grad.data.data(), n, c, h, w, f);
      }
      if (nodes_[weight.id].requires_grad) {
        ensure_grad(weight.id);
        kernels::conv2d_backward_weight(g.data.data(), nodes_[x.id].value.data.data(),
                                        nodes_[weight.id].grad.data.data(), n, c, h, w, f);
      }
      if (nodes_[bias.id].requires_grad) {
        ensure_grad(bias.id);
        kernels::conv2d_backward_bias(g.data.data(), nodes_[bias.id].grad.data.data(), n, f, h, w);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::maxpool2(Var x) {
  const Tensor<T>& xv = node(x).value;
  check(xv.ndim() == 4, "maxpool2: input must be [N,C,H,W]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(h % 2 == 0 && w % 2 == 0, "maxpool2: H and W must be even");
  const int oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint8_t>>(out.numel());
  double margin = std::numeric_limits<double>::infinity();
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* ip = xv.data.data() + p * h * w;
    T* op = out.data.data() + p * oh * ow;
    std::uint8_t* ap = argmax->data() + p * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        const T v[4] = {ip[(2 * y) * w + 2 * xo], ip[(2 * y) * w + 2 * xo + 1],
                        ip[(2 * y + 1) * w + 2 * xo], ip[(2 * y + 1) * w + 2 * xo + 1]};
        int best = 0;
        for (int k = 1; k < 4; ++k)
          if (v[k] > v[best]) best = k;  // keep first on ties
        T second = -std::numeric_limits<T>::infinity();
        for (int k = 0; k < 4; ++k)
          if (k != best) second = std::max(second, v[k]);
        // bitwise ties come from structurally identical values (constant
        // regions, clamped zeros) that move together under perturbation;
        // near-ties stay guarded by the margin
        if (v[best] != second)
          margin = std::min(margin, static_cast<double>(v[best] - second));
        op[y * ow + xo] = v[best];
        ap[y * ow + xo] = static_cast<std::uint8_t>(best);
      }
  }
  note_margin(margin);
  bool rg = node(x).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, o, argmax, n, c, oh, ow, w]() {
      ensure_grad(x.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& dx = nodes_[x.id].grad;
      const std::size_t planes = static_cast<std::size_t>(n) * c;
      for (std::size_t p = 0; p < planes; ++p) {
        const T* gp = g.data.data() + p * oh * ow;
        const std::uint8_t* ap = argmax->data() + p * oh * ow;
        T* dp = dx.data.data() + p * (2 * oh) * w;
        for (int y = 0; y < oh; ++y)
          for (int xo = 0; xo < ow; ++xo) {
            const int k = ap[y * ow + xo];
            const int iy = 2 * y + k / 2, ix = 2 * xo + k % 2;
            dp[iy * w + ix] += gp[y * ow + xo];
          }
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::upsample2(Var x) {
  const Tensor<T>& xv = node(x).value;
  check(xv.ndim() == 4, "upsample2: input must be [N,C,H,W]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(planes); ++p) {
    const T* ip = xv.data.data() + static_cast<std::size_t>(p) * h * w;
    T* op = out.data.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xo = 0; xo < w; ++xo) {
        const T v = ip[y * w + xo];
        op[(2 * y) * (2 * w) + 2 * xo] = v;
        op[(2 * y) * (2 * w) + 2 * xo + 1] = v;
        op[(2 * y + 1) * (2 * w) + 2 * xo] = v;
        op[(2 * y + 1) * (2 * w) + 2 * xo + 1] = v;
      }
  }
  bool rg = node(x).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, o, n, c, h, w]() {
      ensure_grad(x.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& dx = nodes_[x.id].grad;
      const std::size_t planes = static_cast<std::size_t>(n) * c;
      for (std::size_t p = 0; p < planes; ++p) {
        const T* gp = g.data.data() + p * 4 * h * w;
        T* dp = dx.data.data() + p * h * w;
        for (int y = 0; y < h; ++y)
          for (int xo = 0; xo < w; ++xo)
            dp[y * w + xo] += gp[(2 * y) * (2 * w) + 2 * xo] + gp[(2 * y) * (2 * w) + 2 * xo + 1] +
                              gp[(2 * y + 1) * (2 * w) + 2 * xo] + gp[(2 * y + 1) * (2 * w) + 2 * xo + 1];
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::batchnorm(Var x, Var gamma, Var beta, BatchNormState<T>* state) {
  const Tensor<T>& xv = node(x).value;
  check(xv.ndim() == 4, "batchnorm: input must be [N,C,H,W]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(state != nullptr, "batchnorm: missing state");
  check(node(gamma).value.numel() == static_cast<std::size_t>(c) &&
            node(beta).value.numel() == static_cast<std::size_t>(c),
        "batchnorm: gamma/beta must be [C]");
  const bool training = (mode_ == Mode::kTrain);
  if (!training)
    check(state->updates > 0, "batchnorm: inference before any training update");

  auto mean = std::make_shared<std::vector<T>>(c);
  auto inv_std = std::make_shared<std::vector<T>>(c);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t per_c = static_cast<std::size_t>(n) * plane;
  const T* gam = node(gamma).value.data.data();
  const T* bet = node(beta).value.data.data();

  if (training) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
      T sum = 0;
      for (int bn = 0; bn < n; ++bn) {
        const T* p = xv.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const T m = sum / static_cast<T>(per_c);
      T vs = 0;
      for (int bn = 0; bn < n; ++bn) {
        const T* p = xv.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = p[i] - m;
          vs += d * d;
        }
      }
      const T v = vs / static_cast<T>(per_c);
      (*mean)[ch] = m;
      (*inv_std)[ch] = T(1) / std::sqrt(v + T(kBnEps));
      state->mean.data[ch] = T(kBnMomentum) * state->mean.data[ch] + T(1 - kBnMomentum) * m;
      state->var.data[ch] = T(kBnMomentum) * state->var.data[ch] + T(1 - kBnMomentum) * v;
    }
    state->updates++;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      (*mean)[ch] = state->mean.data[ch];
      (*inv_std)[ch] = T(1) / std::sqrt(state->var.data[ch] + T(kBnEps));
    }
  }

  Tensor<T> out(xv.shape);
#pragma omp parallel for collapse(2) schedule(static)
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* p = xv.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
      T* op = out.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
      const T m = (*mean)[ch], is = (*inv_std)[ch], gm = gam[ch], bt = bet[ch];
      for (std::size_t i = 0; i < plane; ++i) op[i] = gm * ((p[i] - m) * is) + bt;
    }

  bool rg = node(x).requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, gamma, beta, o, mean, inv_std, training, n, c, plane, per_c]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& xt = nodes_[x.id].value;
      const T* gam2 = nodes_[gamma.id].value.data.data();
      const bool need_dx = nodes_[x.id].requires_grad;
      const bool need_dg = nodes_[gamma.id].requires_grad;
      const bool need_db = nodes_[beta.id].requires_grad;
      if (need_dx) ensure_grad(x.id);
      if (need_dg) ensure_grad(gamma.id);
      if (need_db) ensure_grad(beta.id);
      for (int ch = 0; ch < c; ++ch) {
        const T m = (*mean)[ch], is = (*inv_std)[ch];
        T s1 = 0, s2 = 0;
        for (int bn = 0; bn < n; ++bn) {
          const T* gp = g.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
          const T* xp = xt.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            s1 += gp[i];
            s2 += gp[i] * ((xp[i] - m) * is);
          }
        }
        if (need_dg) nodes_[gamma.id].grad.data[ch] += s2;
        if (need_db) nodes_[beta.id].grad.data[ch] += s1;
        if (need_dx) {
          const T gm = gam2[ch];
          const T mcount = static_cast<T>(per_c);
          for (int bn = 0; bn < n; ++bn) {
            const T* gp = g.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
            const T* xp = xt.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
            T* dp = nodes_[x.id].grad.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
            if (training) {
              for (std::size_t i = 0; i < plane; ++i) {
                const T xhat = (xp[i] - m) * is;
                dp[i] += gm * is * (gp[i] - s1 / mcount - xhat * s2 / mcount);
              }
            } else {
              for (std::size_t i = 0; i < plane; ++i) dp[i] += gm * is * gp[i];
            }
          }
        }
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::relu(Var x) {
  const Tensor<T>& xv = node(x).value;
  Tensor<T> out(xv.shape);
  // exact zeros are stable fixed points (clamped outputs of an upstream
  // relu); they only move if that relu's own margin is crossed, so they do
  // not count as kinks here
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    out.data[i] = std::max(T(0), xv.data[i]);
    if (xv.data[i] != T(0))
      margin = std::min(margin, static_cast<double>(std::abs(xv.data[i])));
  }
  note_margin(margin);
  bool rg = node(x).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, o]() {
      ensure_grad(x.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& xt = nodes_[x.id].value;
      Tensor<T>& dx = nodes_[x.id].grad;
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (xt.data[i] > T(0)) dx.data[i] += g.data[i];
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::softmax_channels(Var x) {
  const Tensor<T>& xv = node(x).value;
  check(xv.ndim() == 4, "softmax_channels: input must be [N,K,H,W]");
  const int n = xv.dim(0), k = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(k >= 2, "softmax_channels: K must be >= 2");
  Tensor<T> out(xv.shape);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int bn = 0; bn < n; ++bn) {
    const T* xp = xv.data.data() + static_cast<std::size_t>(bn) * k * plane;
    T* op = out.data.data() + static_cast<std::size_t>(bn) * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = xp[i];
      for (int ch = 1; ch < k; ++ch) mx = std::max(mx, xp[ch * plane + i]);
      T sum = 0;
      for (int ch = 0; ch < k; ++ch) {
        const T e = std::exp(xp[ch * plane + i] - mx);
        op[ch * plane + i] = e;
        sum += e;
      }
      for (int ch = 0; ch < k; ++ch) op[ch * plane + i] /= sum;
    }
  }
  bool rg = node(x).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, o, n, k, plane]() {
      ensure_grad(x.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& p = nodes_[o.id].value;
      Tensor<T>& dx = nodes_[x.id].grad;
      for (int bn = 0; bn < n; ++bn) {
        const T* gp = g.data.data() + static_cast<std::size_t>(bn) * k * plane;
        const T* pp = p.data.data() + static_cast<std::size_t>(bn) * k * plane;
        T* dp = dx.data.data() + static_cast<std::size_t>(bn) * k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          T dot = 0;
          for (int ch = 0; ch < k; ++ch) dot += gp[ch * plane + i] * pp[ch * plane + i];
          for (int ch = 0; ch < k; ++ch)
            dp[ch * plane + i] += pp[ch * plane + i] * (gp[ch * plane + i] - dot);
        }
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::concat_channels(Var a, Var b) {
  const Tensor<T>& av = node(a).value;
  const Tensor<T>& bv = node(b).value;
  check(av.ndim() == 4 && bv.ndim() == 4, "concat_channels: inputs must be [N,C,H,W]");
  check(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
        "concat_channels: shape mismatch");
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  Tensor<T> out({n, ca + cb, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int bn = 0; bn < n; ++bn) {
    std::copy_n(av.data.data() + static_cast<std::size_t>(bn) * ca * plane, ca * plane,
                out.data.data() + static_cast<std::size_t>(bn) * (ca + cb) * plane);
    std::copy_n(bv.data.data() + static_cast<std::size_t>(bn) * cb * plane, cb * plane,
                out.data.data() + (static_cast<std::size_t>(bn) * (ca + cb) + ca) * plane);
  }
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, a, b, o, n, ca, cb, plane]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (nodes_[a.id].requires_grad) {
        ensure_grad(a.id);
        Tensor<T>& da = nodes_[a.id].grad;
        for (int bn = 0; bn < n; ++bn) {
          const T* gp = g.data.data() + static_cast<std::size_t>(bn) * (ca + cb) * plane;
          T* dp = da.data.data() + static_cast<std::size_t>(bn) * ca * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(ca) * plane; ++i) dp[i] += gp[i];
        }
      }
      if (nodes_[b.id].requires_grad) {
        ensure_grad(b.id);
        Tensor<T>& db = nodes_[b.id].grad;
        for (int bn = 0; bn < n; ++bn) {
          const T* gp = g.data.data() + (static_cast<std::size_t>(bn) * (ca + cb) + ca) * plane;
          T* dp = db.data.data() + static_cast<std::size_t>(bn) * cb * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(cb) * plane; ++i) dp[i] += gp[i];
        }
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::fully_connected(Var x, Var weight, Var bias) {
  const Tensor<T>& xv = node(x).value;
  const Tensor<T>& wv = node(weight).value;
  const Tensor<T>& bv = node(bias).value;
  check(xv.ndim() == 2 && wv.ndim() == 2, "fully_connected: x [N,I], w [O,I]");
  check(xv.dim(1) == wv.dim(1), "fully_connected: inner dimension mismatch");
  check(bv.numel() == static_cast<std::size_t>(wv.dim(0)), "fully_connected: bias must be [O]");
  const int n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor<T> out({n, out_dim});
  for (int bn = 0; bn < n; ++bn)
    for (int ou = 0; ou < out_dim; ++ou) {
      T acc = bv.data[ou];
      const T* xr = xv.data.data() + static_cast<std::size_t>(bn) * in;
      const T* wr = wv.data.data() + static_cast<std::size_t>(ou) * in;
      for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out.at(bn, ou) = acc;
    }
  bool rg = node(x).requires_grad || node(weight).requires_grad || node(bias).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, weight, bias, o, n, in, out_dim]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& xt = nodes_[x.id].value;
      const Tensor<T>& wt = nodes_[weight.id].value;
      if (nodes_[x.id].requires_grad) {
        ensure_grad(x.id);
        Tensor<T>& dx = nodes_[x.id].grad;
        for (int bn = 0; bn < n; ++bn)
          for (int ou = 0; ou < out_dim; ++ou) {
            const T gv = g.at(bn, ou);
            for (int i = 0; i < in; ++i) dx.at(bn, i) += gv * wt.at(ou, i);
          }
      }
      if (nodes_[weight.id].requires_grad) {
        ensure_grad(weight.id);
        Tensor<T>& dw = nodes_[weight.id].grad;
        for (int bn = 0; bn < n; ++bn)
          for (int ou = 0; ou < out_dim; ++ou) {
            const T gv = g.at(bn, ou);
            for (int i = 0; i < in; ++i) dw.at(ou, i) += gv * xt.at(bn, i);
          }
      }
      if (nodes_[bias.id].requires_grad) {
        ensure_grad(bias.id);
        Tensor<T>& db = nodes_[bias.id].grad;
        for (int bn = 0; bn < n; ++bn)
          for (int ou = 0; ou < out_dim; ++ou) db.data[ou] += g.at(bn, ou);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::global_avg_pool(Var x) {
  const Tensor<T>& xv = node(x).value;
  check(xv.ndim() == 4, "global_avg_pool: input must be [N,C,H,W]");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out({n, c});
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* p = xv.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out.at(bn, ch) = acc / static_cast<T>(plane);
    }
  bool rg = node(x).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, x, o, n, c, plane]() {
      ensure_grad(x.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& dx = nodes_[x.id].grad;
      for (int bn = 0; bn < n; ++bn)
        for (int ch = 0; ch < c; ++ch) {
          const T gv = g.at(bn, ch) / static_cast<T>(plane);
          T* dp = dx.data.data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) dp[i] += gv;
        }
    };
  }
  return o;
}

// ---------------------------------------------------------------------------
// elementwise / reductions

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& av = node(a).value;
  const Tensor<T>& bv = node(b).value;
  check(av.same_shape(bv), "add: shape mismatch");
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, a, b, o]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      for (Var v : {a, b}) {
        if (!nodes_[v.id].requires_grad) continue;
        ensure_grad(v.id);
        Tensor<T>& d = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += g.data[i];
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  const Tensor<T>& av = node(a).value;
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = factor * av.data[i];
  bool rg = node(a).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, a, o, factor]() {
      ensure_grad(a.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& d = nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) d.data[i] += factor * g.data[i];
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::mean_all(Var a) {
  const Tensor<T>& av = node(a).value;
  check(av.numel() > 0, "mean_all: empty tensor");
  T acc = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av.data[i];
  const T m = acc / static_cast<T>(av.numel());
  bool rg = node(a).requires_grad;
  Var o = push(Tensor<T>::scalar(m), rg);
  if (record_ && rg) {
    const T inv = T(1) / static_cast<T>(av.numel());
    node(o).backward = [this, a, o, inv]() {
      ensure_grad(a.id);
      const T gv = nodes_[o.id].grad.data[0] * inv;
      Tensor<T>& d = nodes_[a.id].grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gv;
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::mse_mean(Var a, Var b) {
  const Tensor<T>& av = node(a).value;
  const Tensor<T>& bv = node(b).value;
  check(av.same_shape(bv), "mse_mean: shape mismatch");
  check(av.numel() > 0, "mse_mean: empty tensor");
  T acc = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const T d = av.data[i] - bv.data[i];
    acc += d * d;
  }
  const T m = T(0.5) * (acc / static_cast<T>(av.numel()));
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var o = push(Tensor<T>::scalar(m), rg);
  if (record_ && rg) {
    const T inv = T(1) / static_cast<T>(av.numel());
    node(o).backward = [this, a, b, o, inv]() {
      const T gv = nodes_[o.id].grad.data[0] * inv;
      const Tensor<T>& at = nodes_[a.id].value;
      const Tensor<T>& bt = nodes_[b.id].value;
      if (nodes_[a.id].requires_grad) {
        ensure_grad(a.id);
        Tensor<T>& d = nodes_[a.id].grad;
        for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gv * (at.data[i] - bt.data[i]);
      }
      if (nodes_[b.id].requires_grad) {
        ensure_grad(b.id);
        Tensor<T>& d = nodes_[b.id].grad;
        for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] -= gv * (at.data[i] - bt.data[i]);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::dot_const(Var a, const Tensor<T>& weights) {
  const Tensor<T>& av = node(a).value;
  check(av.same_shape(weights), "dot_const: shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av.data[i] * weights.data[i];
  bool rg = node(a).requires_grad;
  Var o = push(Tensor<T>::scalar(acc), rg);
  if (record_ && rg) {
    auto wcopy = std::make_shared<Tensor<T>>(weights);
    node(o).backward = [this, a, o, wcopy]() {
      ensure_grad(a.id);
      const T gv = nodes_[o.id].grad.data[0];
      Tensor<T>& d = nodes_[a.id].grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += gv * wcopy->data[i];
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::cce_loss(Var probs, const Tensor<T>& target) {
  const Tensor<T>& pv = node(probs).value;
  check(pv.same_shape(target), "cce_loss: shape mismatch");
  check(pv.ndim() == 4, "cce_loss: probs must be [N,K,H,W]");
  const std::size_t pixels =
      static_cast<std::size_t>(pv.dim(0)) * pv.dim(2) * pv.dim(3);
  const T lo = T(kCceClip), hi = T(1) - T(kCceClip);
  T acc = 0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    if (target.data[i] == T(0)) continue;
    const T p = std::min(hi, std::max(lo, pv.data[i]));
    acc -= target.data[i] * std::log(p);
  }
  const T loss = acc / static_cast<T>(pixels);
  bool rg = node(probs).requires_grad;
  Var o = push(Tensor<T>::scalar(loss), rg);
  if (record_ && rg) {
    auto tcopy = std::make_shared<Tensor<T>>(target);
    node(o).backward = [this, probs, o, tcopy, pixels, lo, hi]() {
      ensure_grad(probs.id);
      const T gv = nodes_[o.id].grad.data[0] / static_cast<T>(pixels);
      const Tensor<T>& p = nodes_[probs.id].value;
      Tensor<T>& d = nodes_[probs.id].grad;
      for (std::size_t i = 0; i < d.numel(); ++i) {
        const T t = tcopy->data[i];
        if (t == T(0)) continue;
        if (p.data[i] > lo && p.data[i] < hi) d.data[i] -= gv * t / p.data[i];
      }
    };
  }
  return o;
}

// ---------------------------------------------------------------------------
// spatial transformer ops

template <typename T>
Var Graph<T>::similarity_matrix(Var params, TransformStage stage) {
  const Tensor<T>& pv = node(params).value;
  check(pv.ndim() == 2 && pv.dim(1) == 4, "similarity_matrix: params must be [N,4]");
  const int n = pv.dim(0);
  Tensor<T> out({n, 6});
  for (int bn = 0; bn < n; ++bn) {
    const T tx = pv.at(bn, 0), ty = pv.at(bn, 1), th = pv.at(bn, 2), sc = pv.at(bn, 3);
    const T c = std::cos(th), sn = std::sin(th);
    T* m = out.data.data() + static_cast<std::size_t>(bn) * 6;
    switch (stage) {
      case TransformStage::kTranslation:
        m[0] = T(1); m[1] = T(0); m[2] = tx;
        m[3] = T(0); m[4] = T(1); m[5] = ty;
        break;
      case TransformStage::kRotationTranslation:
        m[0] = c;  m[1] = -sn; m[2] = c * tx - sn * ty;
        m[3] = sn; m[4] = c;   m[5] = sn * tx + c * ty;
        break;
      case TransformStage::kFull:
        m[0] = sc * c;  m[1] = -sc * sn; m[2] = sc * (c * tx - sn * ty);
        m[3] = sc * sn; m[4] = sc * c;   m[5] = sc * (sn * tx + c * ty);
        break;
    }
  }
  bool rg = node(params).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, params, o, stage, n]() {
      ensure_grad(params.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& pv2 = nodes_[params.id].value;
      Tensor<T>& d = nodes_[params.id].grad;
      for (int bn = 0; bn < n; ++bn) {
        const T tx = pv2.at(bn, 0), ty = pv2.at(bn, 1), th = pv2.at(bn, 2), sc = pv2.at(bn, 3);
        const T c = std::cos(th), sn = std::sin(th);
        const T* gm = g.data.data() + static_cast<std::size_t>(bn) * 6;
        T dtx = 0, dty = 0, dth = 0, ds = 0;
        switch (stage) {
          case TransformStage::kTranslation:
            dtx = gm[2];
            dty = gm[5];
            break;
          case TransformStage::kRotationTranslation:
            dtx = gm[2] * c + gm[5] * sn;
            dty = gm[2] * (-sn) + gm[5] * c;
            dth = gm[0] * (-sn) + gm[1] * (-c) + gm[2] * (-sn * tx - c * ty) +
                  gm[3] * c + gm[4] * (-sn) + gm[5] * (c * tx - sn * ty);
            break;
          case TransformStage::kFull:
            dtx = sc * (gm[2] * c + gm[5] * sn);
            dty = sc * (gm[2] * (-sn) + gm[5] * c);
            dth = sc * (gm[0] * (-sn) + gm[1] * (-c) + gm[2] * (-sn * tx - c * ty) +
                        gm[3] * c + gm[4] * (-sn) + gm[5] * (c * tx - sn * ty));
            ds = gm[0] * c + gm[1] * (-sn) + gm[2] * (c * tx - sn * ty) +
                 gm[3] * sn + gm[4] * c + gm[5] * (sn * tx + c * ty);
            break;
        }
        d.at(bn, 0) += dtx;
        d.at(bn, 1) += dty;
        d.at(bn, 2) += dth;
        d.at(bn, 3) += ds;
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::transform_grid(Var mats, int out_h, int out_w) {
  const Tensor<T>& mv = node(mats).value;
  check(mv.ndim() == 2 && mv.dim(1) == 6, "transform_grid: mats must be [N,6]");
  check(out_h >= 2 && out_w >= 2, "transform_grid: output dims must be >= 2");
  const int n = mv.dim(0);
  const std::vector<double> base = canonical_grid(out_h, out_w);
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  Tensor<T> out({n, 2, out_h, out_w});
  for (int bn = 0; bn < n; ++bn) {
    const T* m = mv.data.data() + static_cast<std::size_t>(bn) * 6;
    T* ox = out.data.data() + static_cast<std::size_t>(bn) * 2 * plane;
    T* oy = ox + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const T gx = static_cast<T>(base[i]);
      const T gy = static_cast<T>(base[plane + i]);
      ox[i] = m[0] * gx + m[1] * gy + m[2];
      oy[i] = m[3] * gx + m[4] * gy + m[5];
    }
  }
  bool rg = node(mats).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    auto base_copy = std::make_shared<std::vector<double>>(base);
    node(o).backward = [this, mats, o, base_copy, n, plane]() {
      ensure_grad(mats.id);
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& d = nodes_[mats.id].grad;
      for (int bn = 0; bn < n; ++bn) {
        const T* gx = g.data.data() + static_cast<std::size_t>(bn) * 2 * plane;
        const T* gy = gx + plane;
        T d0 = 0, d1 = 0, d2 = 0, d3 = 0, d4 = 0, d5 = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          const T bx = static_cast<T>((*base_copy)[i]);
          const T by = static_cast<T>((*base_copy)[plane + i]);
          d0 += gx[i] * bx;
          d1 += gx[i] * by;
          d2 += gx[i];
          d3 += gy[i] * bx;
          d4 += gy[i] * by;
          d5 += gy[i];
        }
        d.at(bn, 0) += d0;
        d.at(bn, 1) += d1;
        d.at(bn, 2) += d2;
        d.at(bn, 3) += d3;
        d.at(bn, 4) += d4;
        d.at(bn, 5) += d5;
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::bilinear_sample(Var image, Var grid) {
  const Tensor<T>& iv = node(image).value;
  const Tensor<T>& gv = node(grid).value;
  check(iv.ndim() == 4, "bilinear_sample: image must be [N,C,H,W]");
  check(gv.ndim() == 4 && gv.dim(1) == 2, "bilinear_sample: grid must be [N,2,H',W']");
  check(iv.dim(0) == gv.dim(0), "bilinear_sample: batch mismatch");
  const int n = iv.dim(0), c = iv.dim(1), h = iv.dim(2), w = iv.dim(3);
  const int oh = gv.dim(2), ow = gv.dim(3);
  Tensor<T> out({n, c, oh, ow});
  kernels::bilinear_forward(iv.data.data(), gv.data.data(), out.data.data(), n, c, h, w, oh, ow);

  // distance of every sampling coordinate to the nearest kernel kink;
  // the kinks sit at the integers in [-1, dim-1+1], beyond them the
  // sampler is constant zero
  {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    const double ax = 0.5 * (w - 1), ay = 0.5 * (h - 1);
    auto kink_distance = [](double p, int dim) {
      if (p < -1.0) return -1.0 - p;
      if (p > static_cast<double>(dim)) return p - static_cast<double>(dim);
      return std::abs(p - std::round(p));
    };
    double margin = std::numeric_limits<double>::infinity();
    for (int bn = 0; bn < n; ++bn) {
      const T* gx = gv.data.data() + static_cast<std::size_t>(bn) * 2 * plane;
      const T* gy = gx + plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double px = (static_cast<double>(gx[i]) + 1.0) * ax;
        const double py = (static_cast<double>(gy[i]) + 1.0) * ay;
        margin = std::min(margin, kink_distance(px, w - 1));
        margin = std::min(margin, kink_distance(py, h - 1));
      }
    }
    note_margin(margin);
  }

  bool rg = node(image).requires_grad || node(grid).requires_grad;
  Var o = push(std::move(out), rg);
  if (record_ && rg) {
    node(o).backward = [this, image, grid, o, n, c, h, w, oh, ow]() {
      const Tensor<T>& g = nodes_[o.id].grad;
      T* dimg = nullptr;
      T* dgrid = nullptr;
      if (nodes_[image.id].requires_grad) {
        ensure_grad(image.id);
        dimg = nodes_[image.id].grad.data.data();
      }
      if (nodes_[grid.id].requires_grad) {
        ensure_grad(grid.id);
        dgrid = nodes_[grid.id].grad.data.data();
      }
      kernels::bilinear_backward(g.data.data(), nodes_[image.id].value.data.data(),
                                 nodes_[grid.id].value.data.data(), dimg, dgrid,
                                 n, c, h, w, oh, ow);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::rigid_component_loss(Var params, const Tensor<T>& gt, int component) {
  const Tensor<T>& pv = node(params).value;
  check(pv.ndim() == 2 && pv.dim(1) == 4, "rigid_component_loss: params must be [N,4]");
  check(pv.same_shape(gt), "rigid_component_loss: gt shape mismatch");
  check(component >= 0 && component < 4, "rigid_component_loss: bad component");
  const int n = pv.dim(0);
  const bool wrap = (component == 2);
  auto diffs = std::make_shared<std::vector<T>>(n);
  double margin = std::numeric_limits<double>::infinity();
  T acc = 0;
  for (int bn = 0; bn < n; ++bn) {
    double d = static_cast<double>(pv.at(bn, component)) - static_cast<double>(gt.at(bn, component));
    if (wrap) {
      d = wrap_angle(d);
      margin = std::min(margin, M_PI - std::abs(d));
    }
    (*diffs)[bn] = static_cast<T>(d);
    acc += T(0.5) * static_cast<T>(d) * static_cast<T>(d);
  }
  if (wrap) note_margin(margin);
  const T loss = acc / static_cast<T>(n);
  bool rg = node(params).requires_grad;
  Var o = push(Tensor<T>::scalar(loss), rg);
  if (record_ && rg) {
    node(o).backward = [this, params, o, diffs, component, n]() {
      ensure_grad(params.id);
      const T gv = nodes_[o.id].grad.data[0] / static_cast<T>(n);
      Tensor<T>& d = nodes_[params.id].grad;
      for (int bn = 0; bn < n; ++bn) d.at(bn, component) += gv * (*diffs)[bn];
    };
  }
  return o;
}

template class Graph<float>;
template class Graph<double>;

// ---------------------------------------------------------------------------

std::vector<double> canonical_grid(int h, int w) {
  check(h >= 2 && w >= 2, "canonical_grid: dims must be >= 2");
  auto axis = [](int extent) {
    std::vector<double> v(static_cast<std::size_t>(extent));
    const double n = static_cast<double>(extent - 1);
    const double alpha = 0.5 * n;
    for (int i = 0; i < extent; ++i) {
      const double ideal = (2.0 * i - n) / n;
      double chosen = ideal;
      for (int k = 0; k < 9; ++k) {
        const int off = (k + 1) / 2 * ((k % 2) ? 1 : -1);  // 0,+1,-1,+2,-2,...
        double cand = ideal;
        for (int j = 0; j < std::abs(off); ++j)
          cand = std::nextafter(cand, off > 0 ? 2.0 : -2.0);
        if ((cand + 1.0) * alpha == static_cast<double>(i)) {
          chosen = cand;
          break;
        }
      }
      v[static_cast<std::size_t>(i)] = chosen;
    }
    return v;
  };
  const std::vector<double> xs = axis(w);
  const std::vector<double> ys = axis(h);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> grid(2 * plane);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      grid[static_cast<std::size_t>(y) * w + x] = xs[static_cast<std::size_t>(x)];
      grid[plane + static_cast<std::size_t>(y) * w + x] = ys[static_cast<std::size_t>(y)];
    }
  return grid;
}

double check_gradient(const GradBuilder& build, const Tensor<double>& x, double eps) {
  Graph<double> g(Graph<double>::Mode::kTrain, true);
  Var xv = g.input(x, true);
  Var loss = build(g, xv);
  check(g.value(loss).numel() == 1, "check_gradient: function must be scalar-valued");
  const double f0 = g.value(loss).data[0];
  check(std::isfinite(f0), "check_gradient: non-finite function value");
  g.backward(loss);
  Tensor<double> analytic = g.has_grad(xv) ? g.grad(xv) : Tensor<double>::zeros(x.shape);

  auto eval = [&](const Tensor<double>& probe) {
    Graph<double> ge(Graph<double>::Mode::kTrain, false);
    Var pv = ge.input(probe, false);
    Var l = build(ge, pv);
    const double v = ge.value(l).data[0];
    check(std::isfinite(v), "check_gradient: non-finite value at probe point");
    return v;
  };

  double max_rel = 0.0;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double fp = eval(probe);
    probe.data[i] = orig - eps;
    const double fm = eval(probe);
    probe.data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

double check_gradient_smooth(const GradBuilder& build,
                             const std::function<Tensor<double>()>& sample,
                             double eps, double margin, int max_tries) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Tensor<double> x = sample();
    Graph<double> g(Graph<double>::Mode::kTrain, true);
    Var xv = g.input(x, true);
    (void)build(g, xv);
    if (g.smooth_margin() > margin) return check_gradient(build, x, eps);
  }
  throw std::runtime_error("check_gradient_smooth: no smooth probe point found");
}

}  // namespace omega
