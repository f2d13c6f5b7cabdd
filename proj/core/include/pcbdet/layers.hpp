#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pcbdet/checkpoint.hpp"
#include "pcbdet/ops.hpp"

namespace pcbdet {

// Named learnable tensors plus batchnorm stat buffers of a model, collected
// for the optimizer and the checkpoint container.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;

  void add(const std::string& name, const Tensor& t) {
    params.emplace_back(name, t);
  }
  void add_buffer(const std::string& name, std::vector<double>* v) {
    buffers.emplace_back(name, v);
  }

  StateMap state_dict() const;
  // Validates that every path exists with a matching shape.
  void load_state(const StateMap& state);
};

Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng);

// Bare convolution with optional per-channel bias (detection head).
struct Conv2dLayer {
  Tensor weight;  // O×C×k×k
  Tensor bias;    // O, undefined when bias-free
  int stride = 1;
  int pad = 0;

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamSet& out);
};

Conv2dLayer make_conv2d(int in_ch, int out_ch, int k, int stride, int pad,
                        bool with_bias, Rng& rng);

// conv -> batchnorm -> SiLU
struct ConvBnSilu {
  Tensor weight;
  Tensor gamma;
  Tensor beta;
  BnStats stats;
  int stride = 1;
  int pad = 0;

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamSet& out);
};

ConvBnSilu make_conv_bn_silu(int in_ch, int out_ch, int k, int stride, int pad,
                             Rng& rng);

}  // namespace pcbdet
