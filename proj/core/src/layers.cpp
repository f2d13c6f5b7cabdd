#include "pcbdet/layers.hpp"

#include <cmath>

namespace pcbdet {

StateMap ParamSet::state_dict() const {
  StateMap state;
  for (const auto& [name, t] : params)
    state[name] = CheckpointEntry{t.shape(), t.values()};
  for (const auto& [name, buf] : buffers)
    state[name] = CheckpointEntry{{static_cast<int64_t>(buf->size())}, *buf};
  return state;
}

void ParamSet::load_state(const StateMap& state) {
  auto fetch = [&state](const std::string& name,
                        const Shape& shape) -> const CheckpointEntry& {
    auto it = state.find(name);
    check(it != state.end(), "load_state: missing entry '" + name + "'");
    check(it->second.shape == shape,
          "load_state: shape mismatch for '" + name + "': checkpoint " +
              shape_str(it->second.shape) + " vs model " + shape_str(shape));
    return it->second;
  };
  for (auto& [name, t] : params)
    t.values_mut() = fetch(name, t.shape()).values;
  for (auto& [name, buf] : buffers)
    *buf = fetch(name, {static_cast<int64_t>(buf->size())}).values;
}

Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  check(fan_in > 0, "kaiming_uniform: fan_in must be > 0");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  Tensor y = conv2d(x, weight, stride, pad);
  if (bias.defined()) y = bias_add(y, bias);
  return y;
}

void Conv2dLayer::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + "weight", weight);
  if (bias.defined()) out.add(prefix + "bias", bias);
}

Conv2dLayer make_conv2d(int in_ch, int out_ch, int k, int stride, int pad,
                        bool with_bias, Rng& rng) {
  check(in_ch > 0 && out_ch > 0, "make_conv2d: zero channels");
  Conv2dLayer layer;
  layer.weight = kaiming_uniform({out_ch, in_ch, k, k},
                                 static_cast<int64_t>(in_ch) * k * k, rng);
  if (with_bias) layer.bias = Tensor::zeros({out_ch}, true);
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

Tensor ConvBnSilu::forward(const Tensor& x, bool training) {
  Tensor y = conv2d(x, weight, stride, pad);
  y = batch_norm2d(y, gamma, beta, stats, training);
  return silu(y);
}

void ConvBnSilu::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + "weight", weight);
  out.add(prefix + "bn.gamma", gamma);
  out.add(prefix + "bn.beta", beta);
  out.add_buffer(prefix + "bn.running_mean", &stats.mean);
  out.add_buffer(prefix + "bn.running_var", &stats.var);
}

ConvBnSilu make_conv_bn_silu(int in_ch, int out_ch, int k, int stride, int pad,
                             Rng& rng) {
  check(in_ch > 0 && out_ch > 0, "make_conv_bn_silu: zero channels");
  ConvBnSilu layer;
  layer.weight = kaiming_uniform({out_ch, in_ch, k, k},
                                 static_cast<int64_t>(in_ch) * k * k, rng);
  layer.gamma = Tensor::full({out_ch}, 1.0, true);
  layer.beta = Tensor::zeros({out_ch}, true);
  layer.stats = BnStats::identity(out_ch);
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

}  // namespace pcbdet
