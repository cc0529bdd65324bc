#include <doctest.h>

#include <cmath>
#include <memory>

#include "omega/graph.hpp"
#include "test_util.hpp"

using namespace omega;
using testutil::random_gaussian;
using testutil::random_tensor;

using G = Graph<double>;

TEST_CASE("conv2d: delta kernel reproduces the input") {
  G g(G::Mode::kInfer);
  Tensor<double> x({1, 1, 3, 3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  Tensor<double> k = Tensor<double>::zeros({1, 1, 3, 3});
  k.data[4] = 1.0;  // center tap
  Var y = g.conv2d(g.input(x), g.input(k), g.input(Tensor<double>::zeros({1})));
  CHECK(g.value(y).data == x.data);
}

TEST_CASE("conv2d: zero padding contributes nothing") {
  G g(G::Mode::kInfer);
  Tensor<double> x({1, 1, 1, 1}, {2.0});
  Tensor<double> k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Var y = g.conv2d(g.input(x), g.input(k), g.input(Tensor<double>::zeros({1})));
  CHECK(g.value(y).data[0] == doctest::Approx(2.0));
}

TEST_CASE("conv2d: gradient counts overlapping taps") {
  G g(G::Mode::kTrain);
  Var x = g.input(Tensor<double>::full({1, 1, 5, 5}, 0.3), true);
  Var k = g.input(Tensor<double>::full({1, 1, 3, 3}, 1.0));
  Var y = g.conv2d(x, k, g.input(Tensor<double>::zeros({1})));
  Var s = g.dot_const(y, Tensor<double>::full({1, 1, 5, 5}, 1.0));
  g.backward(s);
  const Tensor<double>& dx = g.grad(x);
  CHECK(dx.at(0, 0, 2, 2) == doctest::Approx(9.0));  // interior
  CHECK(dx.at(0, 0, 0, 0) == doctest::Approx(4.0));  // corner
  CHECK(dx.at(0, 0, 0, 2) == doctest::Approx(6.0));  // edge
}

TEST_CASE("conv2d: channel mismatch is a shape error") {
  G g(G::Mode::kInfer);
  Var x = g.input(Tensor<double>::zeros({1, 2, 4, 4}));
  Var k = g.input(Tensor<double>::zeros({3, 1, 3, 3}));
  Var b = g.input(Tensor<double>::zeros({3}));
  CHECK_THROWS(g.conv2d(x, k, b));
}

TEST_CASE("maxpool2: block max and tie-break to first element") {
  {
    G g(G::Mode::kInfer);
    Var y = g.maxpool2(g.input(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})));
    CHECK(g.value(y).data[0] == 4.0);
  }
  {
    G g(G::Mode::kTrain);
    Var x = g.input(Tensor<double>::full({1, 1, 2, 2}, 7.0), true);
    Var y = g.maxpool2(x);
    CHECK(g.value(y).data[0] == 7.0);
    g.backward(g.dot_const(y, Tensor<double>::full({1, 1, 1, 1}, 1.0)));
    const Tensor<double>& dx = g.grad(x);
    CHECK(dx.data[0] == 1.0);  // first element of the block
    CHECK(dx.data[1] == 0.0);
    CHECK(dx.data[2] == 0.0);
    CHECK(dx.data[3] == 0.0);
  }
  {
    G g(G::Mode::kInfer);
    Tensor<double> ramp({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) ramp.data[i] = i;
    Var y = g.maxpool2(g.input(ramp));
    CHECK(g.value(y).data == std::vector<double>{5, 7, 13, 15});
  }
  {
    G g(G::Mode::kInfer);
    CHECK_THROWS(g.maxpool2(g.input(Tensor<double>::zeros({1, 1, 3, 4}))));
  }
}

TEST_CASE("upsample2: nearest replication, gradients sum") {
  {
    G g(G::Mode::kInfer);
    Var y = g.upsample2(g.input(Tensor<double>({1, 1, 1, 1}, {3.0})));
    CHECK(g.value(y).data == std::vector<double>{3, 3, 3, 3});
  }
  {
    G g(G::Mode::kTrain);
    Var x = g.input(Tensor<double>({1, 1, 1, 1}, {3.0}), true);
    Var y = g.upsample2(x);
    g.backward(g.dot_const(y, Tensor<double>::full({1, 1, 2, 2}, 1.0)));
    CHECK(g.grad(x).data[0] == 4.0);
  }
  {
    G g(G::Mode::kInfer);
    Var y = g.upsample2(g.input(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})));
    CHECK(g.value(y).data == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  }
}

TEST_CASE("batchnorm: normalization, gamma/beta, running stats") {
  {
    // batch already at mean 0, variance 1 -> output ~ input
    G g(G::Mode::kTrain);
    Tensor<double> x({2, 1, 1, 1}, {-1.0, 1.0});
    BatchNormState<double> st(1);
    Var y = g.batchnorm(g.input(x), g.input(Tensor<double>::full({1}, 1.0)),
                        g.input(Tensor<double>::zeros({1})), &st);
    CHECK(g.value(y).data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(g.value(y).data[1] == doctest::Approx(1.0).epsilon(1e-4));
  }
  {
    // gamma = 0 -> output equals beta
    G g(G::Mode::kTrain);
    BatchNormState<double> st(1);
    Var y = g.batchnorm(g.input(Tensor<double>({2, 1, 1, 1}, {0.4, 2.5})),
                        g.input(Tensor<double>::zeros({1})),
                        g.input(Tensor<double>::full({1}, 0.7)), &st);
    CHECK(g.value(y).data[0] == 0.7);
    CHECK(g.value(y).data[1] == 0.7);
  }
  {
    // batch {1,3} normalizes to {-1,+1} (eps-corrected)
    G g(G::Mode::kTrain);
    BatchNormState<double> st(1);
    Var y = g.batchnorm(g.input(Tensor<double>({2, 1, 1, 1}, {1.0, 3.0})),
                        g.input(Tensor<double>::full({1}, 1.0)),
                        g.input(Tensor<double>::zeros({1})), &st);
    CHECK(g.value(y).data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(g.value(y).data[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(st.updates == 1);
    CHECK(st.mean.data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  }
  {
    // inference before any training update
    G g(G::Mode::kInfer);
    BatchNormState<double> st(1);
    CHECK_THROWS_WITH(g.batchnorm(g.input(Tensor<double>::zeros({1, 1, 1, 1})),
                                  g.input(Tensor<double>::full({1}, 1.0)),
                                  g.input(Tensor<double>::zeros({1})), &st),
                      doctest::Contains("before any training update"));
  }
}

TEST_CASE("softmax_channels: uniform, stabilized, closed form") {
  {
    G g(G::Mode::kInfer);
    Var y = g.softmax_channels(g.input(Tensor<double>::full({1, 6, 1, 1}, 3.7)));
    for (double v : g.value(y).data) CHECK(v == doctest::Approx(1.0 / 6.0));
  }
  {
    G g(G::Mode::kInfer);
    Var y = g.softmax_channels(g.input(Tensor<double>({1, 2, 1, 1}, {1000.0, 0.0})));
    CHECK(g.value(y).data[0] == doctest::Approx(1.0));
    CHECK(g.value(y).data[1] == doctest::Approx(0.0));
  }
  {
    G g(G::Mode::kInfer);
    Var y = g.softmax_channels(g.input(Tensor<double>({1, 2, 1, 1}, {std::log(2.0), 0.0})));
    CHECK(g.value(y).data[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(g.value(y).data[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    // per-pixel sums are 1 within 1e-6, entries in [0,1]
    Rng rng(11);
    G g(G::Mode::kInfer);
    Var y = g.softmax_channels(g.input(random_tensor({2, 6, 4, 4}, rng, -5.0, 5.0)));
    const Tensor<double>& p = g.value(y);
    for (int n = 0; n < 2; ++n)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) {
          double s = 0.0;
          for (int k = 0; k < 6; ++k) {
            const double v = p.at(n, k, h, w);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            s += v;
          }
          CHECK(std::abs(s - 1.0) <= 1e-6);
        }
  }
}

TEST_CASE("relu, concat, mse trivial examples") {
  G g(G::Mode::kInfer);
  Var r = g.relu(g.input(Tensor<double>({1, 1, 1, 2}, {-1.0, 2.0})));
  CHECK(g.value(r).data == std::vector<double>{0.0, 2.0});

  Var c = g.concat_channels(g.input(Tensor<double>({1, 2, 1, 1}, {1, 2})),
                            g.input(Tensor<double>({1, 3, 1, 1}, {3, 4, 5})));
  CHECK(g.value(c).shape == std::vector<int>{1, 5, 1, 1});
  CHECK(g.value(c).data == std::vector<double>{1, 2, 3, 4, 5});

  Var m = g.mse_mean(g.input(Tensor<double>({1, 1, 1, 2}, {1, 2})),
                     g.input(Tensor<double>({1, 1, 1, 2}, {1, 2})));
  CHECK(g.value(m).data[0] == 0.0);
}

TEST_CASE("graph: backward twice is an error") {
  G g(G::Mode::kTrain);
  Var x = g.input(Tensor<double>::scalar(2.0), true);
  Var y = g.scale(x, 3.0);
  g.backward(y);
  CHECK(g.grad(x).data[0] == 3.0);
  CHECK_THROWS_WITH(g.backward(y), doctest::Contains("twice"));
}

TEST_CASE("graph: forward is bit-identical across runs") {
  Rng rng(5);
  Tensor<double> x = random_gaussian({2, 3, 8, 8}, rng);
  Tensor<double> k = random_gaussian({4, 3, 3, 3}, rng, 0.2);
  Tensor<double> b = random_gaussian({4}, rng, 0.1);
  auto run = [&]() {
    G g(G::Mode::kInfer);
    Var y = g.relu(g.conv2d(g.input(x), g.input(k), g.input(b)));
    return g.value(g.maxpool2(y)).data;
  };
  CHECK(run() == run());
}

TEST_CASE("check_gradient: sum of squares") {
  // f = sum(x^2) represented through the op set; analytic 2x
  auto build = [](G& g, Var x) {
    Var m = g.mse_mean(x, g.input(Tensor<double>::zeros({1})));
    return g.scale(m, 2.0);  // numel 1: 0.5*mean(x^2)*2 = x^2
  };
  const double err = check_gradient(build, Tensor<double>::scalar(3.0), 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("check_gradient: conv2d + relu composite") {
  Rng rng(21);
  Tensor<double> k = random_gaussian({2, 1, 3, 3}, rng, 0.7);
  Tensor<double> b = random_gaussian({2}, rng, 0.1);
  Tensor<double> proj = random_gaussian({1, 2, 6, 6}, rng);
  auto build = [&](G& g, Var x) {
    Var y = g.relu(g.conv2d(x, g.input(k), g.input(b)));
    return g.dot_const(y, proj);
  };
  auto sample = [&]() { return random_gaussian({1, 1, 6, 6}, rng); };
  const double err = check_gradient_smooth(build, sample, 1e-5, 1e-3);
  CHECK(err < 1e-4);
}

TEST_CASE("check_gradient: softmax + cross entropy") {
  Rng rng(31);
  Tensor<double> target = Tensor<double>::zeros({1, 4, 2, 2});
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w) target.at(0, static_cast<int>(rng.uniform_int(4)), h, w) = 1.0;
  auto build = [&](G& g, Var x) { return g.cce_loss(g.softmax_channels(x), target); };
  auto sample = [&]() { return random_gaussian({1, 4, 2, 2}, rng, 1.5); };
  const double err = check_gradient_smooth(build, sample, 1e-5, 1e-3);
  CHECK(err < 1e-4);
}

TEST_CASE("check_gradient: batchnorm training mode") {
  Rng rng(41);
  Tensor<double> proj = random_gaussian({2, 3, 4, 4}, rng);
  Tensor<double> gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor<double> beta = random_tensor({3}, rng, -0.5, 0.5);
  auto build = [&](G& g, Var x) {
    auto st = std::make_shared<BatchNormState<double>>(3);
    Var y = g.batchnorm(x, g.input(gamma), g.input(beta), st.get());
    return g.dot_const(y, proj);
  };
  auto sample = [&]() { return random_gaussian({2, 3, 4, 4}, rng); };
  const double err = check_gradient_smooth(build, sample, 1e-5, 0.0);
  CHECK(err < 1e-4);
}

TEST_CASE("check_gradient: maxpool2 and upsample2") {
  Rng rng(51);
  Tensor<double> proj_p = random_gaussian({1, 2, 2, 2}, rng);
  auto build_pool = [&](G& g, Var x) { return g.dot_const(g.maxpool2(x), proj_p); };
  auto sample = [&]() { return random_gaussian({1, 2, 4, 4}, rng); };
  CHECK(check_gradient_smooth(build_pool, sample, 1e-5, 1e-3) < 1e-4);

  Tensor<double> proj_u = random_gaussian({1, 2, 8, 8}, rng);
  auto build_up = [&](G& g, Var x) { return g.dot_const(g.upsample2(x), proj_u); };
  CHECK(check_gradient_smooth(build_up, sample, 1e-5, 0.0) < 1e-4);
}

TEST_CASE("cce gradient w.r.t. logits equals (probs - target)/(N*H*W)") {
  Rng rng(61);
  Tensor<double> logits = random_gaussian({2, 3, 2, 2}, rng, 1.2);
  Tensor<double> target = Tensor<double>::zeros({2, 3, 2, 2});
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 2; ++h)
      for (int w = 0; w < 2; ++w) target.at(n, static_cast<int>(rng.uniform_int(3)), h, w) = 1.0;
  G g(G::Mode::kTrain);
  Var lv = g.input(logits, true);
  Var probs = g.softmax_channels(lv);
  Var loss = g.cce_loss(probs, target);
  g.backward(loss);
  const Tensor<double>& p = g.value(probs);
  const Tensor<double>& dl = g.grad(lv);
  const double denom = 2.0 * 2.0 * 2.0;  // N*H*W
  for (std::size_t i = 0; i < p.numel(); ++i)
    CHECK(dl.data[i] == doctest::Approx((p.data[i] - target.data[i]) / denom).epsilon(1e-9));
}
