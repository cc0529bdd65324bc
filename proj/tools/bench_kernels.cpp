// Times the omp-parallel kernels against their serial reference twins and
// verifies bit-identical output on the benchmark problems.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "omega/kernels.hpp"
#include "omega/rng.hpp"
#include "omega/tensor.hpp"

using namespace omega;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.gaussian());
  return t;
}

template <typename T>
void bench_conv(const char* label, int n, int c, int f, int hw, int reps) {
  Rng rng(1);
  Tensor<T> x = random_tensor<T>({n, c, hw, hw}, rng);
  Tensor<T> k = random_tensor<T>({f, c, 3, 3}, rng);
  Tensor<T> b = random_tensor<T>({f}, rng);
  Tensor<T> dout = random_tensor<T>({n, f, hw, hw}, rng);
  Tensor<T> out_omp({n, f, hw, hw}), out_ref({n, f, hw, hw});
  Tensor<T> din_omp({n, c, hw, hw}), din_ref({n, c, hw, hw});
  Tensor<T> dw_omp({f, c, 3, 3}), dw_ref({f, c, 3, 3});

  const double fwd_omp = time_ms([&] {
    kernels::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_omp.data.data(), n, c, hw, hw, f);
  }, reps);
  const double fwd_ref = time_ms([&] {
    kernels::ref::conv2d_forward(x.data.data(), k.data.data(), b.data.data(), out_ref.data.data(), n, c, hw, hw, f);
  }, reps);
  const double bwd_omp = time_ms([&] {
    std::fill(din_omp.data.begin(), din_omp.data.end(), T(0));
    std::fill(dw_omp.data.begin(), dw_omp.data.end(), T(0));
    kernels::conv2d_backward_input(dout.data.data(), k.data.data(), din_omp.data.data(), n, c, hw, hw, f);
    kernels::conv2d_backward_weight(dout.data.data(), x.data.data(), dw_omp.data.data(), n, c, hw, hw, f);
  }, reps);
  const double bwd_ref = time_ms([&] {
    std::fill(din_ref.data.begin(), din_ref.data.end(), T(0));
    std::fill(dw_ref.data.begin(), dw_ref.data.end(), T(0));
    kernels::ref::conv2d_backward_input(dout.data.data(), k.data.data(), din_ref.data.data(), n, c, hw, hw, f);
    kernels::ref::conv2d_backward_weight(dout.data.data(), x.data.data(), dw_ref.data.data(), n, c, hw, hw, f);
  }, reps);

  const bool identical = out_omp.data == out_ref.data && din_omp.data == din_ref.data &&
                         dw_omp.data == dw_ref.data;
  const double macs = 2.0 * n * f * c * 9.0 * hw * hw;
  std::printf("%-28s fwd %8.2f ms (ref %8.2f ms, x%5.1f, %6.2f GFLOP/s)  bwd %8.2f ms (ref %8.2f ms, x%5.1f)  bits %s\n",
              label, fwd_omp, fwd_ref, fwd_ref / fwd_omp, macs / fwd_omp * 1e-6, bwd_omp, bwd_ref,
              bwd_ref / bwd_omp, identical ? "identical" : "DIFFER");
}

template <typename T>
void bench_bilinear(const char* label, int n, int hw, int reps) {
  Rng rng(2);
  Tensor<T> img = random_tensor<T>({n, 1, hw, hw}, rng);
  Tensor<T> grid({n, 2, hw, hw});
  for (auto& v : grid.data) v = static_cast<T>(rng.uniform(-1.1, 1.1));
  Tensor<T> out_omp({n, 1, hw, hw}), out_ref({n, 1, hw, hw});
  const double t_omp = time_ms([&] {
    kernels::bilinear_forward(img.data.data(), grid.data.data(), out_omp.data.data(), n, 1, hw, hw, hw, hw);
  }, reps);
  const double t_ref = time_ms([&] {
    kernels::ref::bilinear_forward(img.data.data(), grid.data.data(), out_ref.data.data(), n, 1, hw, hw, hw, hw);
  }, 1);
  std::printf("%-28s     %8.3f ms (brute-force ref %8.1f ms, x%.0f)  bits %s\n", label, t_omp,
              t_ref, t_ref / t_omp, out_omp.data == out_ref.data ? "identical" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--threads" && i + 1 < argc) threads = std::atoi(argv[++i]);
  }
  if (threads > 0) omp_set_num_threads(threads);
  std::printf("threads: %d\n", omp_get_max_threads());

  bench_conv<float>("conv 8x8x64x64 f=8  float", 8, 8, 8, 64, 5);
  bench_conv<float>("conv 8x32x16x16 f=32 float", 8, 32, 32, 16, 5);
  bench_conv<double>("conv 8x8x64x64 f=8  double", 8, 8, 8, 64, 5);
  bench_bilinear<float>("bilinear 8x64x64 float", 8, 64, 5);
  bench_bilinear<double>("bilinear 4x128x128 double", 4, 128, 3);
  return 0;
}
