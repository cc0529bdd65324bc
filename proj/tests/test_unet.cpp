#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "omega/omega_net.hpp"
#include "omega/unet.hpp"
#include "test_util.hpp"

using namespace omega;
using G = Graph<double>;

namespace {

template <typename T>
UNetParams<T> make_unet(const UNetConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  UNetParams<T> p;
  p.init(cfg, rng);
  return p;
}

}  // namespace

TEST_CASE("unet_forward: desk shapes") {
  UNetConfig cfg{3, 4, 1, 6};
  UNetParams<double> params = make_unet<double>(cfg, 1);
  std::vector<ParamRef<double>> refs;
  params.register_params("u", refs);

  Rng rng(2);
  G g(G::Mode::kTrain);
  PlacedVars<double> placed = place_params(g, refs, false);
  Var img = g.input(testutil::random_gaussian({2, 1, 64, 64}, rng));
  UNetOutput<double> out = unet_forward(g, img, params, placed);
  CHECK(g.value(out.bottleneck).shape == std::vector<int>{2, 32, 8, 8});
  CHECK(g.value(out.probs).shape == std::vector<int>{2, 6, 64, 64});
  CHECK(g.value(out.logits).shape == std::vector<int>{2, 6, 64, 64});

  // per-pixel channel sums are 1 within 1e-6
  const Tensor<double>& p = g.value(out.probs);
  for (int y = 0; y < 64; y += 17)
    for (int x = 0; x < 64; x += 13) {
      double s = 0;
      for (int c = 0; c < 6; ++c) s += p.at(0, c, y, x);
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("unet_forward: paper-scale bottleneck is 16x16") {
  UNetConfig cfg{4, 2, 1, 6};  // narrow filters keep this quick
  UNetParams<double> params = make_unet<double>(cfg, 3);
  std::vector<ParamRef<double>> refs;
  params.register_params("u", refs);
  G g(G::Mode::kTrain);
  PlacedVars<double> placed = place_params(g, refs, false);
  Var img = g.input(Tensor<double>::zeros({1, 1, 256, 256}));
  UNetOutput<double> out = unet_forward(g, img, params, placed);
  CHECK(g.value(out.bottleneck).dim(2) == 16);
  CHECK(g.value(out.bottleneck).dim(3) == 16);
}

TEST_CASE("unet_forward: indivisible spatial dims are a shape error") {
  UNetConfig cfg{3, 4, 1, 6};
  UNetParams<double> params = make_unet<double>(cfg, 4);
  std::vector<ParamRef<double>> refs;
  params.register_params("u", refs);
  G g(G::Mode::kTrain);
  PlacedVars<double> placed = place_params(g, refs, false);
  Var img = g.input(Tensor<double>::zeros({1, 1, 60, 60}));
  CHECK_THROWS_WITH(unet_forward(g, img, params, placed), doctest::Contains("divisible"));
}

TEST_CASE("cce_loss: closed-form values") {
  {
    // probs equal to the one-hot target: loss at the clipping scale
    G g(G::Mode::kInfer);
    Tensor<double> target = Tensor<double>::zeros({1, 2, 1, 1});
    target.at(0, 0, 0, 0) = 1.0;
    Tensor<double> probs = target;
    Var loss = g.cce_loss(g.input(probs), target);
    CHECK(g.value(loss).data[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(g.value(loss).data[0] >= 0.0);
  }
  {
    // uniform probs over 6 classes -> ln 6
    G g(G::Mode::kInfer);
    Tensor<double> probs = Tensor<double>::full({1, 6, 2, 2}, 1.0 / 6.0);
    Tensor<double> target = Tensor<double>::zeros({1, 6, 2, 2});
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) target.at(0, (y + x) % 6, y, x) = 1.0;
    Var loss = g.cce_loss(g.input(probs), target);
    CHECK(g.value(loss).data[0] == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  }
  {
    // single pixel with true-class probability 0.25 -> ln 4
    G g(G::Mode::kInfer);
    Tensor<double> probs({1, 2, 1, 1}, {0.25, 0.75});
    Tensor<double> target({1, 2, 1, 1}, {1.0, 0.0});
    Var loss = g.cce_loss(g.input(probs), target);
    CHECK(g.value(loss).data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint: bit-exact round trip") {
  namespace fs = std::filesystem;
  NetworkConfig cfg;
  cfg.variant = 'B';
  cfg.unet = UNetConfig{2, 4, 1, 6};
  cfg.image_size = 16;
  OmegaNet<float> net;
  Rng rng(5);
  net.init(cfg, rng);
  // dirty the BN stats so they round trip too
  net.bn_states[0].second->mean.data[0] = 0.25f;
  net.bn_states[0].second->updates = 3;

  const fs::path dir = fs::temp_directory_path() / "omega_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "net.ckpt").string();
  save_checkpoint(path, net.to_checkpoint());

  OmegaNet<float> other;
  Rng rng2(99);
  other.init(cfg, rng2);
  other.from_checkpoint(load_checkpoint(path));
  for (std::size_t i = 0; i < net.refs.size(); ++i)
    CHECK(net.refs[i].value->data == other.refs[i].value->data);
  CHECK(other.bn_states[0].second->mean.data[0] == 0.25f);
  CHECK(other.bn_states[0].second->updates == 3);

  // a second save produces byte-identical files
  const std::string path2 = (dir / "net2.ckpt").string();
  save_checkpoint(path2, other.to_checkpoint());
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.size() > 1000);
  fs::remove_all(dir);

  // config mismatch is rejected
  OmegaNet<float> wrong;
  NetworkConfig cfg2 = cfg;
  cfg2.variant = 'C';
  Rng rng3(7);
  wrong.init(cfg2, rng3);
  Checkpoint ck = net.to_checkpoint();
  CHECK_THROWS_WITH(wrong.from_checkpoint(ck), doctest::Contains("mismatch"));
}

TEST_CASE("variants B-D contain the variant-A initial U-Net shapes") {
  NetworkConfig base;
  base.unet = UNetConfig{2, 4, 1, 6};
  base.image_size = 16;
  auto shapes_of = [&](char variant) {
    NetworkConfig cfg = base;
    cfg.variant = variant;
    OmegaNet<float> net;
    Rng rng(1);
    net.init(cfg, rng);
    std::vector<std::vector<int>> shapes;
    for (const auto& r : net.refs)
      if (r.name.rfind("unet0.", 0) == 0) shapes.push_back(r.value->shape);
    return shapes;
  };
  const auto a = shapes_of('A');
  CHECK(a.size() > 0);
  CHECK(shapes_of('B') == a);
  CHECK(shapes_of('C') == a);
  CHECK(shapes_of('D') == a);
}
