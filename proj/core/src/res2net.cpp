#include "pcbdet/res2net.hpp"

namespace pcbdet {

std::vector<Tensor> Res2NetBlock::hierarchical_outputs(const Tensor& x,
                                                       bool training) {
  check(x.rank() == 4, "res2net: input must be N×C×H×W");
  check(x.dim(1) == in_channels,
        "res2net: input has " + std::to_string(x.dim(1)) +
            " channels, block expects " + std::to_string(in_channels));
  check(x.dim(2) >= 1 && x.dim(3) >= 1, "res2net: empty spatial extent");

  Tensor u = reduce.forward(x, training);

  // Hierarchical cascade: y1 = x1, yi = K_i(xi + y_{i-1}).
  std::vector<Tensor> ys;
  ys.reserve(scale);
  for (int i = 0; i < scale; ++i) {
    Tensor xi = slice_channels(u, static_cast<int64_t>(i) * width,
                               static_cast<int64_t>(i + 1) * width);
    if (i == 0) {
      ys.push_back(xi);
    } else {
      ys.push_back(group[i - 1].forward(add(xi, ys.back()), training));
    }
  }
  return ys;
}

Tensor Res2NetBlock::forward(const Tensor& x, bool training) {
  std::vector<Tensor> ys = hierarchical_outputs(x, training);
  Tensor merged = scale == 1 ? ys[0] : concat_channels(ys);
  Tensor expanded = expand.forward(merged, training);
  Tensor residual = has_projection ? projection.forward(x, training) : x;
  return add(residual, expanded);
}

void Res2NetBlock::collect(const std::string& prefix, ParamSet& out) {
  reduce.collect(prefix + "reduce.", out);
  for (size_t i = 0; i < group.size(); ++i)
    group[i].collect(prefix + "group." + std::to_string(i) + ".", out);
  expand.collect(prefix + "expand.", out);
  if (has_projection) projection.collect(prefix + "projection.", out);
}

Res2NetBlock res2net_init(int in_ch, int out_ch, int scale_s, int width_w,
                          uint64_t seed) {
  check(in_ch > 0 && out_ch > 0, "res2net_init: zero channels");
  check(scale_s >= 1, "res2net_init: scale must be >= 1");
  check(width_w >= 1, "res2net_init: width must be >= 1");

  Rng rng(seed);
  Res2NetBlock block;
  block.in_channels = in_ch;
  block.out_channels = out_ch;
  block.scale = scale_s;
  block.width = width_w;
  const int internal = width_w * scale_s;
  block.reduce = make_conv_bn_silu(in_ch, internal, 1, 1, 0, rng);
  block.group.reserve(scale_s - 1);
  for (int i = 1; i < scale_s; ++i)
    block.group.push_back(make_conv_bn_silu(width_w, width_w, 3, 1, 1, rng));
  block.expand = make_conv_bn_silu(internal, out_ch, 1, 1, 0, rng);
  block.has_projection = in_ch != out_ch;
  if (block.has_projection)
    block.projection = make_conv_bn_silu(in_ch, out_ch, 1, 1, 0, rng);
  return block;
}

}  // namespace pcbdet
