#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "omega/dataset.hpp"
#include "omega/omega_net.hpp"
#include "omega/train.hpp"
#include "test_util.hpp"

using namespace omega;
using G = Graph<double>;

namespace {

NetworkConfig tiny_config(char variant) {
  NetworkConfig cfg;
  cfg.variant = variant;
  cfg.unet = UNetConfig{2, 4, 1, 6};
  cfg.image_size = 16;
  return cfg;
}

template <typename T>
TrainTargets<T> random_targets(int n, int k, int hw, Rng& rng) {
  TrainTargets<T> t;
  t.initial_onehot = Tensor<T>::zeros({n, k, hw, hw});
  t.canonical_onehot = Tensor<T>::zeros({n, k, hw, hw});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x) {
        t.initial_onehot.at(i, static_cast<int>(rng.uniform_int(k)), y, x) = T(1);
        t.canonical_onehot.at(i, static_cast<int>(rng.uniform_int(k)), y, x) = T(1);
      }
  t.gt_params = Tensor<T>({n, 4});
  for (int i = 0; i < n; ++i) {
    t.gt_params.at(i, 0) = static_cast<T>(rng.uniform(-0.2, 0.2));
    t.gt_params.at(i, 1) = static_cast<T>(rng.uniform(-0.2, 0.2));
    t.gt_params.at(i, 2) = static_cast<T>(rng.uniform(-3.0, 3.0));
    t.gt_params.at(i, 3) = static_cast<T>(rng.uniform(0.6, 1.0));
  }
  return t;
}

}  // namespace

TEST_CASE("omega_total_loss: weighted assembly") {
  NetworkConfig cfg;  // paper alpha defaults
  {
    LossBreakdown b;
    b.l_su = 1.0;
    b.l_tx = b.l_ty = b.l_theta = b.l_s = 1.0;
    b.l_it = b.l_itheta = b.l_is = 1.0;
    b.l_sh = {1.0};
    b.has_transformer = true;
    CHECK(omega_total_loss(b, cfg) == 501.3);
  }
  {
    LossBreakdown b;
    b.l_su = 0.5;
    b.has_transformer = false;  // variant A
    CHECK(omega_total_loss(b, cfg) == 50.0);
  }
  {
    // doubling alpha4 exactly doubles the hourglass contribution
    LossBreakdown b;
    b.l_su = 0.3;
    b.l_tx = 0.1;
    b.l_sh = {0.25, 0.5};
    b.has_transformer = true;
    const double t1 = omega_total_loss(b, cfg);
    NetworkConfig cfg2 = cfg;
    cfg2.alpha4 = 2.0;
    const double t2 = omega_total_loss(b, cfg2);
    CHECK(t2 - t1 == doctest::Approx(0.75).epsilon(1e-12));
  }
  {
    LossBreakdown b;
    b.l_su = std::nan("");
    CHECK_THROWS_WITH(omega_total_loss(b, cfg), doctest::Contains("L_SU"));
    LossBreakdown c;
    c.l_su = 0.0;
    c.has_transformer = true;
    c.l_theta = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH(omega_total_loss(c, cfg), doctest::Contains("L_theta"));
  }
}

TEST_CASE("omega_forward: variant A has no transformer trace") {
  OmegaNet<double> net;
  Rng rng(11);
  net.init(tiny_config('A'), rng);
  Rng drng(12);
  Tensor<double> images = testutil::random_gaussian({2, 1, 16, 16}, drng);
  TrainTargets<double> targets = random_targets<double>(2, 6, 16, drng);
  G g(G::Mode::kTrain);
  PlacedVars<double> placed = place_params(g, net.refs, true);
  ForwardTrace<double> trace = omega_forward(g, net, placed, images, &targets);
  CHECK_FALSE(trace.params_pred.valid());
  CHECK(trace.hourglass.empty());
  CHECK_FALSE(trace.losses.has_transformer);
  CHECK(trace.losses.total == doctest::Approx(100.0 * trace.losses.l_su));
}

TEST_CASE("omega_forward: variant D emits three hourglass maps") {
  OmegaNet<double> net;
  Rng rng(13);
  net.init(tiny_config('D'), rng);
  Rng drng(14);
  Tensor<double> images = testutil::random_gaussian({1, 1, 16, 16}, drng);
  G g(G::Mode::kInfer, false);
  // inference before any BN update is an error; a fresh net must train first
  PlacedVars<double> placed = place_params(g, net.refs, false);
  CHECK_THROWS(omega_forward<double>(g, net, placed, images, nullptr));

  TrainTargets<double> targets = random_targets<double>(1, 6, 16, drng);
  G g2(G::Mode::kTrain);
  PlacedVars<double> placed2 = place_params(g2, net.refs, true);
  ForwardTrace<double> trace = omega_forward(g2, net, placed2, images, &targets);
  CHECK(trace.hourglass.size() == 3);
  CHECK(trace.losses.l_sh.size() == 3);
  CHECK(g2.value(trace.warped_image).shape == std::vector<int>{1, 1, 16, 16});

  G g3(G::Mode::kInfer, false);
  PlacedVars<double> placed3 = place_params(g3, net.refs, false);
  ForwardTrace<double> itrace = omega_forward<double>(g3, net, placed3, images, nullptr);
  CHECK(itrace.hourglass.size() == 3);
  for (const auto& hg : itrace.hourglass)
    CHECK(g3.value(hg.probs).shape == std::vector<int>{1, 6, 16, 16});
}

TEST_CASE("omega_forward: ground-truth params injected zero the transformer losses") {
  OmegaNet<double> net;
  Rng rng(15);
  net.init(tiny_config('B'), rng);
  Rng drng(16);
  Tensor<double> images = testutil::random_gaussian({2, 1, 16, 16}, drng);
  TrainTargets<double> targets = random_targets<double>(2, 6, 16, drng);

  // first pass discovers the predictions
  Tensor<double> predicted;
  {
    G g(G::Mode::kTrain);
    PlacedVars<double> placed = place_params(g, net.refs, true);
    ForwardTrace<double> trace = omega_forward(g, net, placed, images, &targets);
    predicted = g.value(trace.params_pred);
  }
  // second pass with gt := predictions; BN batch statistics make the forward
  // deterministic, so the transformer losses vanish exactly
  targets.gt_params = predicted;
  G g(G::Mode::kTrain);
  PlacedVars<double> placed = place_params(g, net.refs, true);
  ForwardTrace<double> trace = omega_forward(g, net, placed, images, &targets);
  CHECK(trace.losses.l_tx == 0.0);
  CHECK(trace.losses.l_ty == 0.0);
  CHECK(trace.losses.l_theta == 0.0);
  CHECK(trace.losses.l_s == 0.0);
  CHECK(trace.losses.l_it == 0.0);
  CHECK(trace.losses.l_itheta == 0.0);
  CHECK(trace.losses.l_is == 0.0);
  CHECK(trace.losses.total ==
        doctest::Approx(100.0 * trace.losses.l_su + trace.losses.l_sh[0]).epsilon(1e-12));
}

TEST_CASE("omega loss gradient: parameter subsets pass check_gradient") {
  // 32x32 desk-style instance, double precision
  NetworkConfig cfg;
  cfg.variant = 'B';
  cfg.unet = UNetConfig{3, 4, 1, 6};
  cfg.image_size = 32;
  OmegaNet<double> net;
  Rng rng(17);
  net.init(cfg, rng);
  Rng drng(18);
  TrainTargets<double> targets = random_targets<double>(1, 6, 32, drng);

  // pick small parameter tensors spread across the model (>= 20 scalars)
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < net.refs.size(); ++i) {
    const std::string& n = net.refs[i].name;
    if (n == "unet0.head.conv.bias" || n == "locnet.fc2.bias" || n == "locnet.fc2.weight" ||
        n == "hg1.head.conv.bias")
      chosen.push_back(i);
  }
  std::size_t scalars = 0;
  for (std::size_t i : chosen) scalars += net.refs[i].value->numel();
  CHECK(scalars >= 20);

  for (std::size_t target_idx : chosen) {
    Tensor<double> images = testutil::random_gaussian({1, 1, 32, 32}, drng);
    auto builder = [&, target_idx](G& g, Var x) {
      PlacedVars<double> placed;
      placed.reserve(net.refs.size());
      for (std::size_t i = 0; i < net.refs.size(); ++i)
        placed.push_back(i == target_idx ? x : g.input(*net.refs[i].value, false));
      ForwardTrace<double> trace = omega_forward(g, net, placed, images, &targets);
      return trace.total_loss;
    };
    auto sample = [&]() {
      images = testutil::random_gaussian({1, 1, 32, 32}, drng);  // re-roll the instance too
      Tensor<double> t = *net.refs[target_idx].value;
      for (auto& v : t.data) v += 0.02 * drng.gaussian();
      return t;
    };
    // Sampler coordinates move ~50x faster than the locnet weights being
    // probed, so the step must stay well below the attainable margin of a
    // full forward (~5e4 activations). Roundoff is still ~1e-7 relative.
    const double err = check_gradient_smooth(builder, sample, 2e-7, 5e-5, 400);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("train: resume reproduces an uninterrupted run bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "omega_resume_test";
  fs::remove_all(dir);
  GenerateSpec spec{3, 1, 2, 16, 3};  // 3 subjects x (SA+HLA+VLA) x 2 frames = 18 images
  generate_dataset((dir / "data").string(), spec, 7);

  TrainOptions opts;
  opts.dataset_dir = (dir / "data").string();
  opts.net = tiny_config('B');
  opts.epochs = 3;
  opts.batch_size = 4;
  opts.seed = 99;
  opts.only_fold = 0;

  opts.out_dir = (dir / "straight").string();
  train_command(opts);

  opts.out_dir = (dir / "resumed").string();
  opts.epochs = 2;
  train_command(opts);
  opts.epochs = 3;
  opts.resume = true;
  train_command(opts);

  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  const std::string a = slurp(dir / "straight" / "ckpt_fold0.ckpt");
  const std::string b = slurp(dir / "resumed" / "ckpt_fold0.ckpt");
  CHECK(a.size() > 1000);
  CHECK(a == b);
  fs::remove_all(dir);
}
