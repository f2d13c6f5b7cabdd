#pragma once

#include <string>
#include <vector>

#include "pcbdet/layers.hpp"

namespace pcbdet {

// Multi-scale hierarchical residual block: a 1×1 reduce, a cascade of
// scale-1 3×3 convs over equal channel splits (split i is transformed on
// top of the running output of split i-1), a 1×1 expand over the
// concatenated splits, and a residual connection. Every conv is
// conv -> bn -> SiLU. The first split passes through untransformed.
struct Res2NetBlock {
  int in_channels = 0;
  int out_channels = 0;
  int scale = 1;  // number of channel splits s
  int width = 0;  // channels per split w; reduce emits w*s

  ConvBnSilu reduce;               // 1×1: in -> w*s
  std::vector<ConvBnSilu> group;   // s-1 of 3×3: w -> w, pad 1
  ConvBnSilu expand;               // 1×1: w*s -> out
  ConvBnSilu projection;           // 1×1: in -> out, only when in != out
  bool has_projection = false;

  Tensor forward(const Tensor& x, bool training);
  // The y_1..y_s cascade outputs after the reduce/split stage, one tensor of
  // `width` channels per split.
  std::vector<Tensor> hierarchical_outputs(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamSet& out);
};

// Kaiming-uniform init, batchnorm gamma=1 beta=0, fully seeded.
// scale_s >= 1, width_w >= 1, channels > 0.
Res2NetBlock res2net_init(int in_ch, int out_ch, int scale_s, int width_w,
                          uint64_t seed);

}  // namespace pcbdet
