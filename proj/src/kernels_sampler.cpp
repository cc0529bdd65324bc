// Bilinear grid-sampling kernels. This translation unit is compiled with
// -ffp-contract=off so the 4-tap path and the brute-force reference round
// identically; the acceptance contract compares them bit for bit.

#include "omega/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace omega::kernels {

template <typename T>
void bilinear_forward(const T* img, const T* grid, T* out,
                      int n, int c, int h, int w, int oh, int ow) {
  const std::size_t gplane = static_cast<std::size_t>(oh) * ow;
  const std::size_t iplane = static_cast<std::size_t>(h) * w;
  const T ax = T(0.5) * (w - 1);
  const T ay = T(0.5) * (h - 1);
#pragma omp parallel for collapse(2) schedule(static)
  for (int bn = 0; bn < n; ++bn) {
    for (int oy = 0; oy < oh; ++oy) {
      const T* gx = grid + (static_cast<std::size_t>(bn) * 2 + 0) * gplane + static_cast<std::size_t>(oy) * ow;
      const T* gy = grid + (static_cast<std::size_t>(bn) * 2 + 1) * gplane + static_cast<std::size_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        const T px = (gx[ox] + T(1)) * ax;
        const T py = (gy[ox] + T(1)) * ay;
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        for (int ic = 0; ic < c; ++ic) {
          const T* ip = img + (static_cast<std::size_t>(bn) * c + ic) * iplane;
          T acc = 0;
          for (int y = y0; y <= y0 + 1; ++y) {
            if (y < 0 || y >= h) continue;
            const T wy = std::max(T(0), T(1) - std::abs(py - T(y)));
            for (int x = x0; x <= x0 + 1; ++x) {
              if (x < 0 || x >= w) continue;
              const T wx = std::max(T(0), T(1) - std::abs(px - T(x)));
              acc += ip[static_cast<std::size_t>(y) * w + x] * wy * wx;
            }
          }
          out[(static_cast<std::size_t>(bn) * c + ic) * gplane + static_cast<std::size_t>(oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void bilinear_backward(const T* dout, const T* img, const T* grid,
                       T* dimg, T* dgrid,
                       int n, int c, int h, int w, int oh, int ow) {
  const std::size_t gplane = static_cast<std::size_t>(oh) * ow;
  const std::size_t iplane = static_cast<std::size_t>(h) * w;
  const T ax = T(0.5) * (w - 1);
  const T ay = T(0.5) * (h - 1);
  if (dimg) {
    // scatter; each (n,c) input plane is owned by one thread
#pragma omp parallel for collapse(2) schedule(static)
    for (int bn = 0; bn < n; ++bn) {
      for (int ic = 0; ic < c; ++ic) {
        T* dp = dimg + (static_cast<std::size_t>(bn) * c + ic) * iplane;
        const T* gxp = grid + (static_cast<std::size_t>(bn) * 2 + 0) * gplane;
        const T* gyp = grid + (static_cast<std::size_t>(bn) * 2 + 1) * gplane;
        const T* op = dout + (static_cast<std::size_t>(bn) * c + ic) * gplane;
        for (std::size_t i = 0; i < gplane; ++i) {
          const T px = (gxp[i] + T(1)) * ax;
          const T py = (gyp[i] + T(1)) * ay;
          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          const T g = op[i];
          for (int y = y0; y <= y0 + 1; ++y) {
            if (y < 0 || y >= h) continue;
            const T wy = std::max(T(0), T(1) - std::abs(py - T(y)));
            for (int x = x0; x <= x0 + 1; ++x) {
              if (x < 0 || x >= w) continue;
              const T wx = std::max(T(0), T(1) - std::abs(px - T(x)));
              dp[static_cast<std::size_t>(y) * w + x] += g * wy * wx;
            }
          }
        }
      }
    }
  }
  if (dgrid) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int bn = 0; bn < n; ++bn) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const std::size_t gi = static_cast<std::size_t>(oy) * ow + ox;
          const T px = (grid[(static_cast<std::size_t>(bn) * 2 + 0) * gplane + gi] + T(1)) * ax;
          const T py = (grid[(static_cast<std::size_t>(bn) * 2 + 1) * gplane + gi] + T(1)) * ay;
          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          T accx = 0, accy = 0;
          for (int ic = 0; ic < c; ++ic) {
            const T* ip = img + (static_cast<std::size_t>(bn) * c + ic) * iplane;
            const T g = dout[(static_cast<std::size_t>(bn) * c + ic) * gplane + gi];
            for (int y = y0; y <= y0 + 1; ++y) {
              if (y < 0 || y >= h) continue;
              const T ry = py - T(y);
              const T wy = std::max(T(0), T(1) - std::abs(ry));
              // d wy / d py: -sign(ry) inside the support, 0 at and beyond kinks
              const T dwy = (std::abs(ry) < T(1) && ry != T(0)) ? (ry > T(0) ? T(-1) : T(1)) : T(0);
              for (int x = x0; x <= x0 + 1; ++x) {
                if (x < 0 || x >= w) continue;
                const T rx = px - T(x);
                const T wx = std::max(T(0), T(1) - std::abs(rx));
                const T dwx = (std::abs(rx) < T(1) && rx != T(0)) ? (rx > T(0) ? T(-1) : T(1)) : T(0);
                const T v = ip[static_cast<std::size_t>(y) * w + x];
                accx += g * v * wy * dwx;
                accy += g * v * dwy * wx;
              }
            }
          }
          dgrid[(static_cast<std::size_t>(bn) * 2 + 0) * gplane + gi] += accx * ax;
          dgrid[(static_cast<std::size_t>(bn) * 2 + 1) * gplane + gi] += accy * ay;
        }
      }
    }
  }
}

namespace ref {

template <typename T>
void bilinear_forward(const T* img, const T* grid, T* out,
                      int n, int c, int h, int w, int oh, int ow) {
  // brute-force double loop over every input pixel
  const std::size_t gplane = static_cast<std::size_t>(oh) * ow;
  const std::size_t iplane = static_cast<std::size_t>(h) * w;
  const T ax = T(0.5) * (w - 1);
  const T ay = T(0.5) * (h - 1);
  for (int bn = 0; bn < n; ++bn)
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const std::size_t gi = static_cast<std::size_t>(oy) * ow + ox;
          const T px = (grid[(static_cast<std::size_t>(bn) * 2 + 0) * gplane + gi] + T(1)) * ax;
          const T py = (grid[(static_cast<std::size_t>(bn) * 2 + 1) * gplane + gi] + T(1)) * ay;
          T acc = 0;
          for (int y = 0; y < h; ++y) {
            const T wy = std::max(T(0), T(1) - std::abs(py - T(y)));
            for (int x = 0; x < w; ++x) {
              const T wx = std::max(T(0), T(1) - std::abs(px - T(x)));
              acc += img[(static_cast<std::size_t>(bn) * c + ic) * iplane + static_cast<std::size_t>(y) * w + x] * wy * wx;
            }
          }
          out[(static_cast<std::size_t>(bn) * c + ic) * gplane + gi] = acc;
        }
}

}  // namespace ref

#define OMEGA_INSTANTIATE_SAMPLER(T)                                                          \
  template void bilinear_forward<T>(const T*, const T*, T*, int, int, int, int, int, int);    \
  template void bilinear_backward<T>(const T*, const T*, const T*, T*, T*, int, int, int, int, int, int); \
  template void ref::bilinear_forward<T>(const T*, const T*, T*, int, int, int, int, int, int);

OMEGA_INSTANTIATE_SAMPLER(float)
OMEGA_INSTANTIATE_SAMPLER(double)

#undef OMEGA_INSTANTIATE_SAMPLER

}  // namespace omega::kernels
