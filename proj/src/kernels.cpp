#include "omega/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace omega::kernels {

namespace {

template <typename T>
inline std::size_t idx4(int a, int b, int c, int d, int db, int dc, int dd) {
  return ((static_cast<std::size_t>(a) * db + b) * dc + c) * dd + d;
}

}  // namespace

template <typename T>
void conv2d_forward(const T* in, const T* weight, const T* bias, T* out,
                    int n, int c, int h, int w, int f) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int bn = 0; bn < n; ++bn) {
    for (int of = 0; of < f; ++of) {
      T* op = out + (static_cast<std::size_t>(bn) * f + of) * in_plane;
      const T bv = bias[of];
      for (std::size_t i = 0; i < in_plane; ++i) op[i] = bv;
      for (int ic = 0; ic < c; ++ic) {
        const T* ip = in + (static_cast<std::size_t>(bn) * c + ic) * in_plane;
        const T* wp = weight + (static_cast<std::size_t>(of) * c + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          const int h0 = std::max(0, 1 - kh), h1 = std::min(h, h + 1 - kh);
          for (int kw = 0; kw < 3; ++kw) {
            const T k = wp[kh * 3 + kw];
            const int w0 = std::max(0, 1 - kw), w1 = std::min(w, w + 1 - kw);
            const int dy = kh - 1, dx = kw - 1;
            for (int y = h0; y < h1; ++y) {
              T* orow = op + static_cast<std::size_t>(y) * w;
              const T* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = w0; x < w1; ++x) orow[x] += k * irow[x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const T* dout, const T* weight, T* din,
                           int n, int c, int h, int w, int f) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int bn = 0; bn < n; ++bn) {
    for (int ic = 0; ic < c; ++ic) {
      T* dp = din + (static_cast<std::size_t>(bn) * c + ic) * plane;
      for (int of = 0; of < f; ++of) {
        const T* gp = dout + (static_cast<std::size_t>(bn) * f + of) * plane;
        const T* wp = weight + (static_cast<std::size_t>(of) * c + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          // din[y] gathers dout[y + 1 - kh]
          const int h0 = std::max(0, kh - 1), h1 = std::min(h, h - 1 + kh);
          for (int kw = 0; kw < 3; ++kw) {
            const T k = wp[kh * 3 + kw];
            const int w0 = std::max(0, kw - 1), w1 = std::min(w, w - 1 + kw);
            const int dy = 1 - kh, dx = 1 - kw;
            for (int y = h0; y < h1; ++y) {
              T* drow = dp + static_cast<std::size_t>(y) * w;
              const T* grow = gp + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = w0; x < w1; ++x) drow[x] += k * grow[x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const T* dout, const T* in, T* dweight,
                            int n, int c, int h, int w, int f) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int of = 0; of < f; ++of) {
    for (int ic = 0; ic < c; ++ic) {
      T* wg = dweight + (static_cast<std::size_t>(of) * c + ic) * 9;
      for (int kh = 0; kh < 3; ++kh) {
        const int dy = kh - 1;
        const int h0 = std::max(0, 1 - kh), h1 = std::min(h, h + 1 - kh);
        for (int kw = 0; kw < 3; ++kw) {
          const int dx = kw - 1;
          const int w0 = std::max(0, 1 - kw), w1 = std::min(w, w + 1 - kw);
          T acc = 0;
          for (int bn = 0; bn < n; ++bn) {
            const T* gp = dout + (static_cast<std::size_t>(bn) * f + of) * plane;
            const T* ip = in + (static_cast<std::size_t>(bn) * c + ic) * plane;
            for (int y = h0; y < h1; ++y) {
              const T* grow = gp + static_cast<std::size_t>(y) * w;
              const T* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
              T racc = 0;
              for (int x = w0; x < w1; ++x) racc += grow[x] * irow[x];
              acc += racc;
            }
          }
          wg[kh * 3 + kw] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_bias(const T* dout, T* dbias, int n, int f, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int of = 0; of < f; ++of) {
    T acc = 0;
    for (int bn = 0; bn < n; ++bn) {
      const T* gp = dout + (static_cast<std::size_t>(bn) * f + of) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
    }
    dbias[of] += acc;
  }
}

namespace ref {

template <typename T>
void conv2d_forward(const T* in, const T* weight, const T* bias, T* out,
                    int n, int c, int h, int w, int f) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int bn = 0; bn < n; ++bn)
    for (int of = 0; of < f; ++of)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          T acc = bias[of];
          for (int ic = 0; ic < c; ++ic)
            for (int kh = 0; kh < 3; ++kh)
              for (int kw = 0; kw < 3; ++kw) {
                const int iy = y + kh - 1, ix = x + kw - 1;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += weight[(static_cast<std::size_t>(of) * c + ic) * 9 + kh * 3 + kw] *
                       in[(static_cast<std::size_t>(bn) * c + ic) * plane + static_cast<std::size_t>(iy) * w + ix];
              }
          out[(static_cast<std::size_t>(bn) * f + of) * plane + static_cast<std::size_t>(y) * w + x] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const T* dout, const T* weight, T* din,
                           int n, int c, int h, int w, int f) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int bn = 0; bn < n; ++bn)
    for (int ic = 0; ic < c; ++ic)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          T acc = 0;
          for (int of = 0; of < f; ++of)
            for (int kh = 0; kh < 3; ++kh)
              for (int kw = 0; kw < 3; ++kw) {
                const int oy = y + 1 - kh, ox = x + 1 - kw;
                if (oy < 0 || oy >= h || ox < 0 || ox >= w) continue;
                acc += weight[(static_cast<std::size_t>(of) * c + ic) * 9 + kh * 3 + kw] *
                       dout[(static_cast<std::size_t>(bn) * f + of) * plane + static_cast<std::size_t>(oy) * w + ox];
              }
          din[(static_cast<std::size_t>(bn) * c + ic) * plane + static_cast<std::size_t>(y) * w + x] += acc;
        }
}

template <typename T>
void conv2d_backward_weight(const T* dout, const T* in, T* dweight,
                            int n, int c, int h, int w, int f) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int of = 0; of < f; ++of)
    for (int ic = 0; ic < c; ++ic)
      for (int kh = 0; kh < 3; ++kh)
        for (int kw = 0; kw < 3; ++kw) {
          const int dy = kh - 1, dx = kw - 1;
          const int h0 = std::max(0, 1 - kh), h1 = std::min(h, h + 1 - kh);
          const int w0 = std::max(0, 1 - kw), w1 = std::min(w, w + 1 - kw);
          T acc = 0;
          for (int bn = 0; bn < n; ++bn)
            for (int y = h0; y < h1; ++y) {
              T racc = 0;
              for (int x = w0; x < w1; ++x)
                racc += dout[(static_cast<std::size_t>(bn) * f + of) * plane + static_cast<std::size_t>(y) * w + x] *
                        in[(static_cast<std::size_t>(bn) * c + ic) * plane + static_cast<std::size_t>(y + dy) * w + (x + dx)];
              acc += racc;
            }
          dweight[(static_cast<std::size_t>(of) * c + ic) * 9 + kh * 3 + kw] += acc;
        }
}

template <typename T>
void conv2d_backward_bias(const T* dout, T* dbias, int n, int f, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int of = 0; of < f; ++of) {
    T acc = 0;
    for (int bn = 0; bn < n; ++bn)
      for (std::size_t i = 0; i < plane; ++i)
        acc += dout[(static_cast<std::size_t>(bn) * f + of) * plane + i];
    dbias[of] += acc;
  }
}

}  // namespace ref

#define OMEGA_INSTANTIATE_KERNELS(T)                                                          \
  template void conv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int, int); \
  template void conv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int);    \
  template void conv2d_backward_weight<T>(const T*, const T*, T*, int, int, int, int, int);   \
  template void conv2d_backward_bias<T>(const T*, T*, int, int, int, int);                    \
  template void ref::conv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int, int); \
  template void ref::conv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int);    \
  template void ref::conv2d_backward_weight<T>(const T*, const T*, T*, int, int, int, int, int);   \
  template void ref::conv2d_backward_bias<T>(const T*, T*, int, int, int, int);                    \

OMEGA_INSTANTIATE_KERNELS(float)
OMEGA_INSTANTIATE_KERNELS(double)

#undef OMEGA_INSTANTIATE_KERNELS

}  // namespace omega::kernels
