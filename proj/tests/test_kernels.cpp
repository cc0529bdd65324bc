#include <doctest.h>

#include "omega/kernels.hpp"
#include "test_util.hpp"

using namespace omega;
using testutil::random_gaussian;
using testutil::random_tensor;

// The omp-parallel kernels must match the serial reference bit for bit:
// every output element is accumulated in the same order in both.

TEST_CASE("conv2d kernels: omp vs serial reference, bit-identical") {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(3));
    const int c = 1 + static_cast<int>(rng.uniform_int(4));
    const int f = 1 + static_cast<int>(rng.uniform_int(5));
    const int h = 3 + static_cast<int>(rng.uniform_int(8));
    const int w = 3 + static_cast<int>(rng.uniform_int(8));
    Tensor<double> x = random_gaussian({n, c, h, w}, rng);
    Tensor<double> k = random_gaussian({f, c, 3, 3}, rng);
    Tensor<double> b = random_gaussian({f}, rng);
    Tensor<double> dout = random_gaussian({n, f, h, w}, rng);

    Tensor<double> out_a({n, f, h, w}), out_b({n, f, h, w});
    kernels::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_a.data.data(), n, c, h, w, f);
    kernels::ref::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_b.data.data(), n, c, h, w, f);
    CHECK(out_a.data == out_b.data);

    Tensor<double> din_a({n, c, h, w}), din_b({n, c, h, w});
    kernels::conv2d_backward_input(dout.data.data(), k.data.data(), din_a.data.data(), n, c, h, w, f);
    kernels::ref::conv2d_backward_input(dout.data.data(), k.data.data(), din_b.data.data(), n, c, h, w, f);
    CHECK(din_a.data == din_b.data);

    Tensor<double> dw_a({f, c, 3, 3}), dw_b({f, c, 3, 3});
    kernels::conv2d_backward_weight(dout.data.data(), x.data.data(), dw_a.data.data(), n, c, h, w, f);
    kernels::ref::conv2d_backward_weight(dout.data.data(), x.data.data(), dw_b.data.data(), n, c, h, w, f);
    CHECK(dw_a.data == dw_b.data);

    Tensor<double> db_a({f}), db_b({f});
    kernels::conv2d_backward_bias(dout.data.data(), db_a.data.data(), n, f, h, w);
    kernels::ref::conv2d_backward_bias(dout.data.data(), db_b.data.data(), n, f, h, w);
    CHECK(db_a.data == db_b.data);
  }
}

TEST_CASE("conv2d kernels: float path matches reference bit for bit") {
  Rng rng(71);
  const int n = 2, c = 3, f = 4, h = 9, w = 7;
  Tensor<float> x({n, c, h, w}), k({f, c, 3, 3}), b({f}), dout({n, f, h, w});
  for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
  for (auto& v : k.data) v = static_cast<float>(rng.gaussian());
  for (auto& v : b.data) v = static_cast<float>(rng.gaussian());
  for (auto& v : dout.data) v = static_cast<float>(rng.gaussian());
  Tensor<float> out_a({n, f, h, w}), out_b({n, f, h, w});
  kernels::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_a.data.data(), n, c, h, w, f);
  kernels::ref::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_b.data.data(), n, c, h, w, f);
  CHECK(out_a.data == out_b.data);
  Tensor<float> din_a({n, c, h, w}), din_b({n, c, h, w});
  kernels::conv2d_backward_input(dout.data.data(), k.data.data(), din_a.data.data(), n, c, h, w, f);
  kernels::ref::conv2d_backward_input(dout.data.data(), k.data.data(), din_b.data.data(), n, c, h, w, f);
  CHECK(din_a.data == din_b.data);
}

TEST_CASE("bilinear kernels: float path matches reference bit for bit") {
  Rng rng(72);
  const int n = 2, c = 2, h = 12, w = 9, oh = 6, ow = 8;
  Tensor<float> img({n, c, h, w}), grid({n, 2, oh, ow});
  for (auto& v : img.data) v = static_cast<float>(rng.gaussian());
  for (auto& v : grid.data) v = static_cast<float>(rng.uniform(-1.3, 1.3));
  Tensor<float> out_a({n, c, oh, ow}), out_b({n, c, oh, ow});
  kernels::bilinear_forward(img.data.data(), grid.data.data(), out_a.data.data(), n, c, h, w, oh, ow);
  kernels::ref::bilinear_forward(img.data.data(), grid.data.data(), out_b.data.data(), n, c, h, w, oh, ow);
  CHECK(out_a.data == out_b.data);
}

TEST_CASE("bilinear kernels: omp vs brute-force reference, bit-identical") {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(2));
    const int c = 1 + static_cast<int>(rng.uniform_int(3));
    const int h = 4 + static_cast<int>(rng.uniform_int(10));
    const int w = 4 + static_cast<int>(rng.uniform_int(10));
    const int oh = 3 + static_cast<int>(rng.uniform_int(8));
    const int ow = 3 + static_cast<int>(rng.uniform_int(8));
    Tensor<double> img = random_gaussian({n, c, h, w}, rng);
    Tensor<double> grid = random_tensor({n, 2, oh, ow}, rng, -1.4, 1.4);
    Tensor<double> out_a({n, c, oh, ow}), out_b({n, c, oh, ow});
    kernels::bilinear_forward(img.data.data(), grid.data.data(), out_a.data.data(), n, c, h, w, oh, ow);
    kernels::ref::bilinear_forward(img.data.data(), grid.data.data(), out_b.data.data(), n, c, h, w, oh, ow);
    CHECK(out_a.data == out_b.data);
  }
}
