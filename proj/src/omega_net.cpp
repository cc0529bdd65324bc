#include "omega/omega_net.hpp"

#include <cmath>

namespace omega {

int NetworkConfig::hourglass_depth() const {
  switch (variant) {
    case 'A': return 0;
    case 'B': return 1;
    case 'C': return 2;
    case 'D': return 3;
    default: throw std::runtime_error(std::string("unknown network variant: ") + variant);
  }
}

template <typename T>
void LocNetParams<T>::init(int in_channels, Rng& rng) {
  const int width = 64;
  c1.conv.weight = orthogonal_init<T>({width, in_channels, 3, 3}, rng);
  c1.conv.bias = Tensor<T>::zeros({width});
  c1.bn.gamma = Tensor<T>::full({width}, T(1));
  c1.bn.beta = Tensor<T>::zeros({width});
  c1.bn.state = BatchNormState<T>(width);
  c2.conv.weight = orthogonal_init<T>({width, width, 3, 3}, rng);
  c2.conv.bias = Tensor<T>::zeros({width});
  c2.bn.gamma = Tensor<T>::full({width}, T(1));
  c2.bn.beta = Tensor<T>::zeros({width});
  c2.bn.state = BatchNormState<T>(width);
  fc1.weight = orthogonal_init<T>({width, width}, rng);
  fc1.bias = Tensor<T>::zeros({width});
  fc2.weight = orthogonal_init<T>({4, width}, rng);
  fc2.bias = Tensor<T>::zeros({4});
}

template <typename T>
void LocNetParams<T>::register_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  auto reg_conv = [&](ConvParams<T>& c, const std::string& name) {
    c.idx = static_cast<int>(out.size());
    out.push_back({name + ".weight", &c.weight});
    out.push_back({name + ".bias", &c.bias});
  };
  auto reg_bn = [&](BnParams<T>& b, const std::string& name) {
    b.idx = static_cast<int>(out.size());
    out.push_back({name + ".gamma", &b.gamma});
    out.push_back({name + ".beta", &b.beta});
  };
  auto reg_fc = [&](FcParams<T>& f, const std::string& name) {
    f.idx = static_cast<int>(out.size());
    out.push_back({name + ".weight", &f.weight});
    out.push_back({name + ".bias", &f.bias});
  };
  reg_conv(c1.conv, prefix + ".c1.conv");
  reg_bn(c1.bn, prefix + ".c1.bn");
  reg_conv(c2.conv, prefix + ".c2.conv");
  reg_bn(c2.bn, prefix + ".c2.bn");
  reg_fc(fc1, prefix + ".fc1");
  reg_fc(fc2, prefix + ".fc2");
}

namespace {

template <typename T>
void collect_bn_states(UNetParams<T>& p, const std::string& prefix,
                       std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
  for (std::size_t lvl = 0; lvl < p.down.size(); ++lvl)
    for (int j = 0; j < 2; ++j)
      out.emplace_back(prefix + ".down" + std::to_string(lvl) + (j ? ".b" : ".a") + ".bn",
                       &p.down[lvl][static_cast<std::size_t>(j)].bn.state);
  out.emplace_back(prefix + ".mid.a.bn", &p.mid_a.bn.state);
  out.emplace_back(prefix + ".mid.b.bn", &p.mid_b.bn.state);
}

}  // namespace

template <typename T>
void OmegaNet<T>::init(const NetworkConfig& cfg, Rng& rng) {
  config = cfg;
  refs.clear();
  bn_states.clear();
  hourglass.clear();

  initial.init(cfg.unet, rng);
  const int depth = cfg.hourglass_depth();
  if (depth > 0) {
    locnet.init(cfg.unet.base_filters << cfg.unet.depth, rng);
    for (int d = 0; d < depth; ++d) {
      UNetConfig hc = cfg.unet;
      // first hourglass U-Net sees I', later ones also the previous softmax
      hc.in_channels = (d == 0) ? 1 : 1 + cfg.unet.num_classes;
      UNetParams<T> u;
      u.init(hc, rng);
      hourglass.push_back(std::move(u));
    }
  }

  initial.register_params("unet0", refs);
  collect_bn_states(initial, "unet0", bn_states);
  if (depth > 0) {
    locnet.register_params("locnet", refs);
    bn_states.emplace_back("locnet.c1.bn", &locnet.c1.bn.state);
    bn_states.emplace_back("locnet.c2.bn", &locnet.c2.bn.state);
    for (int d = 0; d < depth; ++d) {
      const std::string prefix = "hg" + std::to_string(d + 1);
      hourglass[static_cast<std::size_t>(d)].register_params(prefix, refs);
      collect_bn_states(hourglass[static_cast<std::size_t>(d)], prefix, bn_states);
    }
  }
}

template <typename T>
Checkpoint OmegaNet<T>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_meta("variant", std::string(1, config.variant));
  ckpt.set_meta("depth", std::to_string(config.unet.depth));
  ckpt.set_meta("base_filters", std::to_string(config.unet.base_filters));
  ckpt.set_meta("num_classes", std::to_string(config.unet.num_classes));
  ckpt.set_meta("image_size", std::to_string(config.image_size));
  for (const auto& r : refs) ckpt.tensors.emplace_back(r.name, r.value->template cast<float>());
  for (const auto& [name, st] : bn_states) {
    ckpt.tensors.emplace_back(name + ".running_mean", st->mean.template cast<float>());
    ckpt.tensors.emplace_back(name + ".running_var", st->var.template cast<float>());
    ckpt.set_meta("updates." + name, std::to_string(st->updates));
  }
  return ckpt;
}

template <typename T>
void OmegaNet<T>::from_checkpoint(const Checkpoint& ckpt) {
  const std::string v = ckpt.meta_value("variant");
  check(v.size() == 1 && v[0] == config.variant, "checkpoint/config mismatch: variant");
  check(ckpt.meta_value("depth") == std::to_string(config.unet.depth),
        "checkpoint/config mismatch: depth");
  check(ckpt.meta_value("base_filters") == std::to_string(config.unet.base_filters),
        "checkpoint/config mismatch: base_filters");
  check(ckpt.meta_value("image_size") == std::to_string(config.image_size),
        "checkpoint/config mismatch: image_size");
  for (auto& r : refs) {
    const Tensor<float>* t = ckpt.find(r.name);
    check(t != nullptr, "checkpoint/config mismatch: missing tensor " + r.name);
    check(t->shape == r.value->shape, "checkpoint/config mismatch: shape of " + r.name);
    *r.value = t->template cast<T>();
  }
  for (auto& [name, st] : bn_states) {
    const Tensor<float>* m = ckpt.find(name + ".running_mean");
    const Tensor<float>* va = ckpt.find(name + ".running_var");
    check(m != nullptr && va != nullptr, "checkpoint/config mismatch: missing BN stats " + name);
    st->mean = m->template cast<T>();
    st->var = va->template cast<T>();
    st->updates = std::stol(ckpt.meta_value("updates." + name, "0"));
  }
}

double omega_total_loss(LossBreakdown& comp, const NetworkConfig& cfg) {
  auto require_finite = [](double v, const std::string& name) {
    if (!std::isfinite(v)) throw std::runtime_error("omega_loss: non-finite component " + name);
  };
  require_finite(comp.l_su, "L_SU");
  double total = cfg.alpha1 * comp.l_su;
  if (comp.has_transformer) {
    require_finite(comp.l_tx, "L_tx");
    require_finite(comp.l_ty, "L_ty");
    require_finite(comp.l_theta, "L_theta");
    require_finite(comp.l_s, "L_s");
    require_finite(comp.l_it, "L_It");
    require_finite(comp.l_itheta, "L_Itheta");
    require_finite(comp.l_is, "L_Is");
    total += cfg.alpha2 * (comp.l_tx + comp.l_ty + comp.l_theta + comp.l_s);
    total += cfg.alpha3 * (comp.l_it + comp.l_itheta + comp.l_is);
    double sh = 0.0;
    for (std::size_t d = 0; d < comp.l_sh.size(); ++d) {
      require_finite(comp.l_sh[d], "L_SH_" + std::to_string(d + 1));
      sh += comp.l_sh[d];
    }
    total += cfg.alpha4 * sh;
  }
  comp.total = total;
  return total;
}

template <typename T>
Var locnet_forward(Graph<T>& g, Var bottleneck, LocNetParams<T>& params,
                   const PlacedVars<T>& placed) {
  const Tensor<T>& bv = g.value(bottleneck);
  check(bv.ndim() == 4, "locnet_forward: bottleneck must be [N,C,H,W]");
  check(bv.dim(2) >= 4 && bv.dim(3) >= 4 && bv.dim(2) % 4 == 0 && bv.dim(3) % 4 == 0,
        "locnet_forward: bottleneck spatial dims must be >= 4x4 and divisible by 4");
  Var x = g.maxpool2(conv_block_forward(g, bottleneck, params.c1, placed));
  x = g.maxpool2(conv_block_forward(g, x, params.c2, placed));
  x = g.global_avg_pool(x);
  x = g.relu(g.fully_connected(x, placed[static_cast<std::size_t>(params.fc1.idx)],
                               placed[static_cast<std::size_t>(params.fc1.idx) + 1]));
  return g.fully_connected(x, placed[static_cast<std::size_t>(params.fc2.idx)],
                           placed[static_cast<std::size_t>(params.fc2.idx) + 1]);
}

template <typename T>
ForwardTrace<T> omega_forward(Graph<T>& g, OmegaNet<T>& net, const PlacedVars<T>& placed,
                              const Tensor<T>& images, const TrainTargets<T>* targets) {
  check(images.ndim() == 4 && images.dim(1) == net.config.unet.in_channels,
        "omega_forward: images must be [N,1,H,W]");
  const int depth = net.config.hourglass_depth();
  ForwardTrace<T> trace;
  Var img = g.input(images, false);
  trace.initial = unet_forward(g, img, net.initial, placed);

  std::vector<Var> loss_terms;  // weighted vars summed at the end
  if (targets) {
    Var l_su = g.cce_loss(trace.initial.probs, targets->initial_onehot);
    trace.losses.l_su = static_cast<double>(g.value(l_su).data[0]);
    loss_terms.push_back(g.scale(l_su, static_cast<T>(net.config.alpha1)));
  }

  if (depth > 0) {
    trace.params_pred = locnet_forward(g, trace.initial.bottleneck, net.locnet, placed);
    const int oh = images.dim(2), ow = images.dim(3);

    Var grid_full = g.transform_grid(
        g.similarity_matrix(trace.params_pred, TransformStage::kFull), oh, ow);
    trace.warped_image = g.bilinear_sample(img, grid_full);

    if (targets) {
      trace.losses.has_transformer = true;
      double* slots[4] = {&trace.losses.l_tx, &trace.losses.l_ty, &trace.losses.l_theta,
                          &trace.losses.l_s};
      Var mat_sum;
      for (int comp = 0; comp < 4; ++comp) {
        Var l = g.rigid_component_loss(trace.params_pred, targets->gt_params, comp);
        *slots[comp] = static_cast<double>(g.value(l).data[0]);
        mat_sum = comp == 0 ? l : g.add(mat_sum, l);
      }
      loss_terms.push_back(g.scale(mat_sum, static_cast<T>(net.config.alpha2)));

      // image losses: predicted vs ground-truth partial warps
      Var gt_pv = g.input(targets->gt_params, false);
      auto stage_warp = [&](Var params, TransformStage st) {
        return g.bilinear_sample(img, g.transform_grid(g.similarity_matrix(params, st), oh, ow));
      };
      Var img_sum;
      const TransformStage stages[3] = {TransformStage::kTranslation,
                                        TransformStage::kRotationTranslation,
                                        TransformStage::kFull};
      double* islots[3] = {&trace.losses.l_it, &trace.losses.l_itheta, &trace.losses.l_is};
      for (int si = 0; si < 3; ++si) {
        Var pred_warp = (stages[si] == TransformStage::kFull)
                            ? trace.warped_image
                            : stage_warp(trace.params_pred, stages[si]);
        Var gt_warp = stage_warp(gt_pv, stages[si]);
        Var l = g.mse_mean(pred_warp, gt_warp);
        *islots[si] = static_cast<double>(g.value(l).data[0]);
        img_sum = si == 0 ? l : g.add(img_sum, l);
      }
      loss_terms.push_back(g.scale(img_sum, static_cast<T>(net.config.alpha3)));
    }

    Var hg_in = trace.warped_image;
    Var hg_sum;
    for (int d = 0; d < depth; ++d) {
      UNetOutput<T> out = unet_forward(g, hg_in, net.hourglass[static_cast<std::size_t>(d)], placed);
      if (targets) {
        Var l = g.cce_loss(out.probs, targets->canonical_onehot);
        trace.losses.l_sh.push_back(static_cast<double>(g.value(l).data[0]));
        hg_sum = d == 0 ? l : g.add(hg_sum, l);
      }
      trace.hourglass.push_back(out);
      if (d + 1 < depth) hg_in = g.concat_channels(trace.warped_image, out.probs);
    }
    if (targets && depth > 0)
      loss_terms.push_back(g.scale(hg_sum, static_cast<T>(net.config.alpha4)));
  }

  if (targets) {
    Var total = loss_terms[0];
    for (std::size_t i = 1; i < loss_terms.size(); ++i) total = g.add(total, loss_terms[i]);
    trace.total_loss = total;
    omega_total_loss(trace.losses, net.config);  // fills .total, checks finiteness
  }
  return trace;
}

template <typename T>
Tensor<unsigned char> argmax_labels(const Tensor<T>& probs, int n) {
  check(probs.ndim() == 4, "argmax_labels: probs must be [N,K,H,W]");
  const int k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  Tensor<unsigned char> out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      T bv = probs.at(n, 0, y, x);
      for (int c = 1; c < k; ++c) {
        const T v = probs.at(n, c, y, x);
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.data[static_cast<std::size_t>(y) * w + x] = static_cast<unsigned char>(best);
    }
  return out;
}

template <typename T>
Tensor<T> onehot_labels(const Tensor<unsigned char>& labels, int num_classes) {
  check(labels.ndim() == 2, "onehot_labels: labels must be 2-D");
  const int h = labels.dim(0), w = labels.dim(1);
  Tensor<T> out({1, num_classes, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int cls = labels.data[static_cast<std::size_t>(y) * w + x];
      check(cls < num_classes, "onehot_labels: class out of range");
      out.at(0, cls, y, x) = T(1);
    }
  return out;
}

#define OMEGA_INSTANTIATE_NET(T)                                                              \
  template struct LocNetParams<T>;                                                           \
  template struct OmegaNet<T>;                                                               \
  template Var locnet_forward<T>(Graph<T>&, Var, LocNetParams<T>&, const PlacedVars<T>&);    \
  template ForwardTrace<T> omega_forward<T>(Graph<T>&, OmegaNet<T>&, const PlacedVars<T>&,   \
                                            const Tensor<T>&, const TrainTargets<T>*);       \
  template Tensor<unsigned char> argmax_labels<T>(const Tensor<T>&, int);                    \
  template Tensor<T> onehot_labels<T>(const Tensor<unsigned char>&, int);

OMEGA_INSTANTIATE_NET(float)
OMEGA_INSTANTIATE_NET(double)

#undef OMEGA_INSTANTIATE_NET

}  // namespace omega
