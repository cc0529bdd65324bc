#include "omega/gradcheck_suite.hpp"

#include <cmath>
#include <memory>

#include "omega/graph.hpp"
#include "omega/rng.hpp"
#include "omega/stn.hpp"

namespace omega {

namespace {

using G = Graph<double>;

Tensor<double> gaussian_tensor(std::vector<int> shape, Rng& rng, double sigma = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = sigma * rng.gaussian();
  return t;
}

Tensor<double> rigid_sample(Rng& rng) {
  Tensor<double> p({1, 4});
  p.data = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-M_PI, M_PI),
            rng.uniform(0.6, 1.2)};
  return p;
}

}  // namespace

std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  Rng rng(stream_seed(seed, "gradcheck"));
  auto add = [&](const std::string& name, double err, double tol = 1e-4) {
    cases.push_back({name, err, tol, err < tol});
  };

  {  // conv2d w.r.t. input, kernel and bias
    Tensor<double> k = gaussian_tensor({3, 2, 3, 3}, rng, 0.5);
    Tensor<double> b = gaussian_tensor({3}, rng, 0.2);
    Tensor<double> x = gaussian_tensor({2, 2, 6, 6}, rng);
    Tensor<double> proj = gaussian_tensor({2, 3, 6, 6}, rng);
    add("conv2d/input", check_gradient(
                            [&](G& g, Var v) {
                              return g.dot_const(g.conv2d(v, g.input(k), g.input(b)), proj);
                            },
                            x));
    add("conv2d/kernel", check_gradient(
                             [&](G& g, Var v) {
                               return g.dot_const(g.conv2d(g.input(x), v, g.input(b)), proj);
                             },
                             k));
    add("conv2d/bias", check_gradient(
                           [&](G& g, Var v) {
                             return g.dot_const(g.conv2d(g.input(x), g.input(k), v), proj);
                           },
                           b));
  }

  {  // batchnorm (training statistics) w.r.t. input, gamma, beta
    Tensor<double> gamma = gaussian_tensor({3}, rng, 0.2);
    for (auto& v : gamma.data) v += 1.0;
    Tensor<double> beta = gaussian_tensor({3}, rng, 0.2);
    Tensor<double> proj = gaussian_tensor({2, 3, 4, 4}, rng);
    auto build_x = [&](G& g, Var v) {
      auto st = std::make_shared<BatchNormState<double>>(3);
      return g.dot_const(g.batchnorm(v, g.input(gamma), g.input(beta), st.get()), proj);
    };
    add("batchnorm/input",
        check_gradient_smooth(build_x, [&]() { return gaussian_tensor({2, 3, 4, 4}, rng); }, 1e-5, 0.0));
    Tensor<double> x = gaussian_tensor({2, 3, 4, 4}, rng);
    add("batchnorm/gamma", check_gradient(
                               [&](G& g, Var v) {
                                 auto st = std::make_shared<BatchNormState<double>>(3);
                                 return g.dot_const(g.batchnorm(g.input(x), v, g.input(beta), st.get()), proj);
                               },
                               gamma));
    add("batchnorm/beta", check_gradient(
                              [&](G& g, Var v) {
                                auto st = std::make_shared<BatchNormState<double>>(3);
                                return g.dot_const(g.batchnorm(g.input(x), g.input(gamma), v, st.get()), proj);
                              },
                              beta));
  }

  {  // maxpool2 and upsample2
    Tensor<double> proj_p = gaussian_tensor({1, 2, 3, 3}, rng);
    add("maxpool2", check_gradient_smooth(
                        [&](G& g, Var v) { return g.dot_const(g.maxpool2(v), proj_p); },
                        [&]() { return gaussian_tensor({1, 2, 6, 6}, rng); }));
    Tensor<double> proj_u = gaussian_tensor({1, 2, 12, 12}, rng);
    add("upsample2", check_gradient_smooth(
                         [&](G& g, Var v) { return g.dot_const(g.upsample2(v), proj_u); },
                         [&]() { return gaussian_tensor({1, 2, 6, 6}, rng); }, 1e-5, 0.0));
  }

  {  // softmax + categorical cross entropy
    Tensor<double> target = Tensor<double>::zeros({1, 6, 3, 3});
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) target.at(0, static_cast<int>(rng.uniform_int(6)), h, w) = 1.0;
    add("softmax_cce", check_gradient_smooth(
                           [&](G& g, Var v) { return g.cce_loss(g.softmax_channels(v), target); },
                           [&]() { return gaussian_tensor({1, 6, 3, 3}, rng, 1.5); }, 1e-5, 0.0));
  }

  {  // similarity matrix -> grid -> bilinear sampler, all three stages
    Tensor<double> img = gaussian_tensor({1, 1, 8, 8}, rng);
    Tensor<double> proj = gaussian_tensor({1, 1, 8, 8}, rng);
    const TransformStage stages[3] = {TransformStage::kTranslation,
                                      TransformStage::kRotationTranslation, TransformStage::kFull};
    const char* names[3] = {"sampler_chain/T", "sampler_chain/RT", "sampler_chain/SRT"};
    for (int s = 0; s < 3; ++s) {
      const TransformStage stage = stages[s];
      add(names[s], check_gradient_smooth(
                        [&, stage](G& g, Var v) {
                          Var grid = g.transform_grid(g.similarity_matrix(v, stage), 8, 8);
                          return g.dot_const(g.bilinear_sample(g.input(img), grid), proj);
                        },
                        [&]() { return rigid_sample(rng); }));
    }
    // sampler w.r.t. the image itself
    Tensor<double> grid_t({1, 2, 5, 5});
    for (auto& v : grid_t.data) v = rng.uniform(-0.9, 0.9);
    Tensor<double> proj2 = gaussian_tensor({1, 1, 5, 5}, rng);
    add("bilinear/image", check_gradient_smooth(
                              [&](G& g, Var v) {
                                return g.dot_const(g.bilinear_sample(v, g.input(grid_t)), proj2);
                              },
                              [&]() { return gaussian_tensor({1, 1, 8, 8}, rng); }));
  }

  {  // matrix losses
    Tensor<double> gt = rigid_sample(rng);
    const char* names[4] = {"matrix_loss/tx", "matrix_loss/ty", "matrix_loss/theta",
                            "matrix_loss/s"};
    for (int comp = 0; comp < 4; ++comp)
      add(names[comp], check_gradient_smooth(
                           [&, comp](G& g, Var v) { return g.rigid_component_loss(v, gt, comp); },
                           [&]() { return rigid_sample(rng); }));
  }

  {  // image losses against ground-truth warped constants
    Tensor<double> img = gaussian_tensor({1, 1, 8, 8}, rng);
    const RigidParams gt{0.1, -0.05, 0.4, 0.9};
    const TransformStage stages[3] = {TransformStage::kTranslation,
                                      TransformStage::kRotationTranslation, TransformStage::kFull};
    const ComposeStage cstages[3] = {ComposeStage::kT, ComposeStage::kRT, ComposeStage::kSRT};
    const char* names[3] = {"image_loss/t", "image_loss/theta", "image_loss/s"};
    for (int s = 0; s < 3; ++s) {
      Tensor<double> img2d({8, 8}, img.data);
      Tensor<double> target2d =
          warp_image_bilinear(img2d, compose_similarity_stage(gt, cstages[s]), 8, 8);
      Tensor<double> target({1, 1, 8, 8}, target2d.data);
      const TransformStage stage = stages[s];
      add(names[s], check_gradient_smooth(
                        [&, stage](G& g, Var v) {
                          Var grid = g.transform_grid(g.similarity_matrix(v, stage), 8, 8);
                          Var warped = g.bilinear_sample(g.input(img), grid);
                          return g.mse_mean(warped, g.input(target));
                        },
                        [&]() { return rigid_sample(rng); }));
    }
  }

  return cases;
}

}  // namespace omega
