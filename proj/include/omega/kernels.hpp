#pragma once

namespace omega::kernels {

// 3x3, stride-1, zero same-padded convolution kernels plus the bilinear grid
// sampler. These are the two hot loops of the project; the omp variants are
// parallelized so that every output element is owned by exactly one thread
// and accumulated in a fixed order, making results bit-identical for any
// thread count. The ref:: namespace keeps naive serial implementations with
// the same per-element accumulation order; tests assert bit-identical output.

// in:  [n,c,h,w]   weight: [f,c,3,3]   bias: [f]   out: [n,f,h,w]
template <typename T>
void conv2d_forward(const T* in, const T* weight, const T* bias, T* out,
                    int n, int c, int h, int w, int f);

// din: [n,c,h,w] accumulated from dout: [n,f,h,w]
template <typename T>
void conv2d_backward_input(const T* dout, const T* weight, T* din,
                           int n, int c, int h, int w, int f);

template <typename T>
void conv2d_backward_weight(const T* dout, const T* in, T* dweight,
                            int n, int c, int h, int w, int f);

template <typename T>
void conv2d_backward_bias(const T* dout, T* dbias, int n, int f, int h, int w);

// img: [n,c,h,w]  grid: [n,2,oh,ow] normalized coords, channel 0 = x, 1 = y.
// Pixel mapping p = (g + 1) * (dim - 1) / 2, 0-based; out-of-image taps read 0.
template <typename T>
void bilinear_forward(const T* img, const T* grid, T* out,
                      int n, int c, int h, int w, int oh, int ow);

// dimg/dgrid may be nullptr when that gradient is not needed.
template <typename T>
void bilinear_backward(const T* dout, const T* img, const T* grid,
                       T* dimg, T* dgrid,
                       int n, int c, int h, int w, int oh, int ow);

namespace ref {

template <typename T>
void conv2d_forward(const T* in, const T* weight, const T* bias, T* out,
                    int n, int c, int h, int w, int f);

template <typename T>
void conv2d_backward_input(const T* dout, const T* weight, T* din,
                           int n, int c, int h, int w, int f);

template <typename T>
void conv2d_backward_weight(const T* dout, const T* in, T* dweight,
                            int n, int c, int h, int w, int f);

template <typename T>
void conv2d_backward_bias(const T* dout, T* dbias, int n, int f, int h, int w);

template <typename T>
void bilinear_forward(const T* img, const T* grid, T* out,
                      int n, int c, int h, int w, int oh, int ow);

}  // namespace ref

}  // namespace omega::kernels
