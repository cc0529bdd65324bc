#include "omega/unet.hpp"

namespace omega {

namespace {

template <typename T>
ConvParams<T> make_conv(int out_ch, int in_ch, Rng& rng) {
  ConvParams<T> p;
  p.weight = orthogonal_init<T>({out_ch, in_ch, 3, 3}, rng);
  p.bias = Tensor<T>::zeros({out_ch});
  return p;
}

template <typename T>
BnParams<T> make_bn(int ch) {
  BnParams<T> p;
  p.gamma = Tensor<T>::full({ch}, T(1));
  p.beta = Tensor<T>::zeros({ch});
  p.state = BatchNormState<T>(ch);
  return p;
}

template <typename T>
void register_conv(ConvParams<T>& c, const std::string& name, std::vector<ParamRef<T>>& out) {
  c.idx = static_cast<int>(out.size());
  out.push_back({name + ".weight", &c.weight});
  out.push_back({name + ".bias", &c.bias});
}

template <typename T>
void register_bn(BnParams<T>& b, const std::string& name, std::vector<ParamRef<T>>& out) {
  b.idx = static_cast<int>(out.size());
  out.push_back({name + ".gamma", &b.gamma});
  out.push_back({name + ".beta", &b.beta});
}

}  // namespace

template <typename T>
PlacedVars<T> place_params(Graph<T>& g, const std::vector<ParamRef<T>>& refs,
                           bool requires_grad) {
  PlacedVars<T> placed;
  placed.reserve(refs.size());
  for (const auto& r : refs) placed.push_back(g.input(*r.value, requires_grad));
  return placed;
}

template <typename T>
void UNetParams<T>::init(const UNetConfig& cfg, Rng& rng) {
  config = cfg;
  check(cfg.num_classes >= 2, "unet: num_classes must be >= 2");
  check(cfg.depth >= 1 && cfg.base_filters >= 1, "unet: bad depth or base_filters");
  down.clear();
  up.clear();
  int in_ch = cfg.in_channels;
  for (int lvl = 0; lvl < cfg.depth; ++lvl) {
    const int ch = cfg.base_filters << lvl;
    std::array<ConvBlock<T>, 2> pair;
    pair[0].conv = make_conv<T>(ch, in_ch, rng);
    pair[0].bn = make_bn<T>(ch);
    pair[1].conv = make_conv<T>(ch, ch, rng);
    pair[1].bn = make_bn<T>(ch);
    down.push_back(std::move(pair));
    in_ch = ch;
  }
  const int mid_ch = cfg.base_filters << cfg.depth;
  mid_a.conv = make_conv<T>(mid_ch, in_ch, rng);
  mid_a.bn = make_bn<T>(mid_ch);
  mid_b.conv = make_conv<T>(mid_ch, mid_ch, rng);
  mid_b.bn = make_bn<T>(mid_ch);
  up.resize(static_cast<std::size_t>(cfg.depth));
  for (int lvl = cfg.depth - 1; lvl >= 0; --lvl) {
    const int out_ch = cfg.base_filters << lvl;
    const int in_up = (lvl == cfg.depth - 1) ? mid_ch : 2 * (cfg.base_filters << (lvl + 1));
    up[static_cast<std::size_t>(lvl)] = make_conv<T>(out_ch, in_up, rng);
  }
  head = make_conv<T>(cfg.num_classes, 2 * cfg.base_filters, rng);
}

template <typename T>
void UNetParams<T>::register_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  for (std::size_t lvl = 0; lvl < down.size(); ++lvl)
    for (int j = 0; j < 2; ++j) {
      const std::string name = prefix + ".down" + std::to_string(lvl) + (j ? ".b" : ".a");
      register_conv(down[lvl][static_cast<std::size_t>(j)].conv, name + ".conv", out);
      register_bn(down[lvl][static_cast<std::size_t>(j)].bn, name + ".bn", out);
    }
  register_conv(mid_a.conv, prefix + ".mid.a.conv", out);
  register_bn(mid_a.bn, prefix + ".mid.a.bn", out);
  register_conv(mid_b.conv, prefix + ".mid.b.conv", out);
  register_bn(mid_b.bn, prefix + ".mid.b.bn", out);
  for (std::size_t lvl = 0; lvl < up.size(); ++lvl)
    register_conv(up[lvl], prefix + ".up" + std::to_string(lvl) + ".conv", out);
  register_conv(head, prefix + ".head.conv", out);
}

template <typename T>
Var conv_block_forward(Graph<T>& g, Var x, ConvBlock<T>& blk, const PlacedVars<T>& placed) {
  check(blk.conv.idx >= 0 && blk.bn.idx >= 0, "conv_block_forward: unregistered block");
  Var y = g.conv2d(x, placed[static_cast<std::size_t>(blk.conv.idx)],
                   placed[static_cast<std::size_t>(blk.conv.idx) + 1]);
  y = g.batchnorm(y, placed[static_cast<std::size_t>(blk.bn.idx)],
                  placed[static_cast<std::size_t>(blk.bn.idx) + 1], &blk.bn.state);
  return g.relu(y);
}

template <typename T>
UNetOutput<T> unet_forward(Graph<T>& g, Var image, UNetParams<T>& params,
                           const PlacedVars<T>& placed) {
  const UNetConfig& cfg = params.config;
  const Tensor<T>& iv = g.value(image);
  check(iv.ndim() == 4, "unet_forward: image must be [N,C,H,W]");
  check(iv.dim(1) == cfg.in_channels, "unet_forward: channel mismatch");
  const int pow2 = 1 << cfg.depth;
  check(iv.dim(2) % pow2 == 0 && iv.dim(3) % pow2 == 0,
        "unet_forward: H and W must be divisible by 2^depth");

  Var x = image;
  std::vector<Var> skips;
  for (int lvl = 0; lvl < cfg.depth; ++lvl) {
    x = conv_block_forward(g, x, params.down[static_cast<std::size_t>(lvl)][0], placed);
    x = conv_block_forward(g, x, params.down[static_cast<std::size_t>(lvl)][1], placed);
    skips.push_back(x);
    x = g.maxpool2(x);
  }
  x = conv_block_forward(g, x, params.mid_a, placed);
  x = conv_block_forward(g, x, params.mid_b, placed);
  const Var bottleneck = x;
  for (int lvl = cfg.depth - 1; lvl >= 0; --lvl) {
    ConvParams<T>& upc = params.up[static_cast<std::size_t>(lvl)];
    x = g.conv2d(g.relu(g.upsample2(x)), placed[static_cast<std::size_t>(upc.idx)],
                 placed[static_cast<std::size_t>(upc.idx) + 1]);
    x = g.concat_channels(x, skips[static_cast<std::size_t>(lvl)]);
  }
  UNetOutput<T> out;
  out.logits = g.conv2d(x, placed[static_cast<std::size_t>(params.head.idx)],
                        placed[static_cast<std::size_t>(params.head.idx) + 1]);
  out.probs = g.softmax_channels(out.logits);
  out.bottleneck = bottleneck;
  return out;
}

#define OMEGA_INSTANTIATE_UNET(T)                                                        \
  template PlacedVars<T> place_params<T>(Graph<T>&, const std::vector<ParamRef<T>>&, bool); \
  template void UNetParams<T>::init(const UNetConfig&, Rng&);                            \
  template void UNetParams<T>::register_params(const std::string&, std::vector<ParamRef<T>>&); \
  template Var conv_block_forward<T>(Graph<T>&, Var, ConvBlock<T>&, const PlacedVars<T>&); \
  template UNetOutput<T> unet_forward<T>(Graph<T>&, Var, UNetParams<T>&, const PlacedVars<T>&);

OMEGA_INSTANTIATE_UNET(float)
OMEGA_INSTANTIATE_UNET(double)

#undef OMEGA_INSTANTIATE_UNET

}  // namespace omega
