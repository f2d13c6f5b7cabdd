#pragma once

#include <vector>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

// Running batchnorm statistics, one entry per channel. Plain buffers owned
// by the layer, updated as a side effect of training-mode forward passes,
// never part of the autodiff graph.
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;

  static BnStats identity(int64_t channels) {
    return BnStats{std::vector<double>(channels, 0.0),
                   std::vector<double>(channels, 1.0)};
  }
};

// x: N×C×H×W, w: O×C×kh×kw -> N×O×H'×W' with
// H' = floor((H + 2*pad - kh) / stride) + 1 (same for W'). No bias.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

// x: N×C×H×W, b: C -> x + b broadcast over N, H, W.
Tensor bias_add(const Tensor& x, const Tensor& b);

// Training mode normalizes with batch statistics (biased variance) and
// updates `stats` in place; eval mode normalizes with `stats`.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BnStats& stats, bool training, double momentum = 0.1,
                    double eps = 1e-5);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// No padding: H' = floor((H - k) / stride) + 1.
Tensor maxpool2d(const Tensor& x, int k, int stride);

// factor >= 1
Tensor upsample_nearest(const Tensor& x, int factor);

Tensor concat_channels(const std::vector<Tensor>& xs);

// Channels [begin, end) of an N×C×H×W tensor.
Tensor slice_channels(const Tensor& x, int64_t begin, int64_t end);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor square(const Tensor& x);

// Sum of all elements -> scalar (shape {1}).
Tensor sum(const Tensor& x);

// Elementwise sqrt; errors on negative input.
Tensor sqrt_elem(const Tensor& x);

// Flat-index gather -> 1-D tensor of indices.size(). Backward scatter-adds.
Tensor gather(const Tensor& x, std::vector<int64_t> indices);

}  // namespace pcbdet
