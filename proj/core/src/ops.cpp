#include "pcbdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcbdet {

namespace {

void check_4d(const Tensor& x, const char* op) {
  check(x.rank() == 4, std::string(op) + ": expected N×C×H×W, got " +
                           shape_str(x.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_4d(x, "conv2d");
  check(w.rank() == 4, "conv2d: kernel must be O×C×kh×kw, got " +
                           shape_str(w.shape()));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(pad >= 0, "conv2d: pad must be >= 0");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  check(w.dim(1) == C, "conv2d: kernel expects " + std::to_string(w.dim(1)) +
                           " input channels, input has " + std::to_string(C));
  check(H + 2 * pad >= KH && W + 2 * pad >= KW,
        "conv2d: kernel larger than padded input");
  const int64_t HO = (H + 2 * pad - KH) / stride + 1;
  const int64_t WO = (W + 2 * pad - KW) / stride + 1;

  const auto& xd = x.values();
  const auto& wd = w.values();
  std::vector<double> out(N * O * HO * WO, 0.0);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t o = 0; o < O; ++o) {
      for (int64_t oh = 0; oh < HO; ++oh) {
        for (int64_t ow = 0; ow < WO; ++ow) {
          const int64_t ih0 = oh * stride - pad;
          const int64_t iw0 = ow * stride - pad;
          double acc = 0.0;
          for (int64_t c = 0; c < C; ++c) {
            const double* xp = &xd[((n * C + c) * H) * W];
            const double* wp = &wd[((o * C + c) * KH) * KW];
            for (int64_t kh = 0; kh < KH; ++kh) {
              const int64_t ih = ih0 + kh;
              if (ih < 0 || ih >= H) continue;
              for (int64_t kw = 0; kw < KW; ++kw) {
                const int64_t iw = iw0 + kw;
                if (iw < 0 || iw >= W) continue;
                acc += xp[ih * W + iw] * wp[kh * KW + kw];
              }
            }
          }
          out[((n * O + o) * HO + oh) * WO + ow] = acc;
        }
      }
    }
  }

  return make_op_result(
      {N, O, HO, WO}, std::move(out), {x, w},
      [stride, pad, N, C, H, W, O, KH, KW, HO, WO](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const bool need_dx = xn.requires_grad;
        const bool need_dw = wn.requires_grad;
        if (need_dx) xn.ensure_grad();
        if (need_dw) wn.ensure_grad();
        const auto& g = self.grad;
        for (int64_t n = 0; n < N; ++n) {
          for (int64_t o = 0; o < O; ++o) {
            for (int64_t oh = 0; oh < HO; ++oh) {
              for (int64_t ow = 0; ow < WO; ++ow) {
                const double go = g[((n * O + o) * HO + oh) * WO + ow];
                if (go == 0.0) continue;
                const int64_t ih0 = oh * stride - pad;
                const int64_t iw0 = ow * stride - pad;
                for (int64_t c = 0; c < C; ++c) {
                  const int64_t xbase = ((n * C + c) * H) * W;
                  const int64_t wbase = ((o * C + c) * KH) * KW;
                  for (int64_t kh = 0; kh < KH; ++kh) {
                    const int64_t ih = ih0 + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (int64_t kw = 0; kw < KW; ++kw) {
                      const int64_t iw = iw0 + kw;
                      if (iw < 0 || iw >= W) continue;
                      if (need_dx)
                        xn.grad[xbase + ih * W + iw] +=
                            go * wn.data[wbase + kh * KW + kw];
                      if (need_dw)
                        wn.grad[wbase + kh * KW + kw] +=
                            go * xn.data[xbase + ih * W + iw];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
  check_4d(x, "bias_add");
  check(b.rank() == 1 && b.dim(0) == x.dim(1),
        "bias_add: bias shape " + shape_str(b.shape()) +
            " does not match channel count " + std::to_string(x.dim(1)));
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> out(x.values());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double bc = b.values()[c];
      double* p = &out[(n * C + c) * HW];
      for (int64_t i = 0; i < HW; ++i) p[i] += bc;
    }
  return make_op_result(
      x.shape(), std::move(out), {x, b}, [N, C, HW](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& bn = *self.parents[1];
        if (xn.requires_grad) {
          xn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            xn.grad[i] += self.grad[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
              const double* g = &self.grad[(n * C + c) * HW];
              double acc = 0.0;
              for (int64_t i = 0; i < HW; ++i) acc += g[i];
              bn.grad[c] += acc;
            }
        }
      });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BnStats& stats, bool training, double momentum,
                    double eps) {
  check_4d(x, "batch_norm2d");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  check(gamma.rank() == 1 && gamma.dim(0) == C, "batch_norm2d: bad gamma shape");
  check(beta.rank() == 1 && beta.dim(0) == C, "batch_norm2d: bad beta shape");
  check(static_cast<int64_t>(stats.mean.size()) == C &&
            static_cast<int64_t>(stats.var.size()) == C,
        "batch_norm2d: stats sized for " + std::to_string(stats.mean.size()) +
            " channels, input has " + std::to_string(C));
  check(eps > 0, "batch_norm2d: eps must be > 0");
  const int64_t M = N * HW;  // elements per channel
  check(!training || M > 0, "batch_norm2d: empty batch in training mode");

  const auto& xd = x.values();
  std::vector<double> mean(C, 0.0), invstd(C, 0.0);
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const double* p = &xd[(n * C + c) * HW];
        for (int64_t i = 0; i < HW; ++i) m += p[i];
      }
      m /= static_cast<double>(M);
      double v = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const double* p = &xd[(n * C + c) * HW];
        for (int64_t i = 0; i < HW; ++i) {
          const double d = p[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(M);  // biased variance, also for running stats
      mean[c] = m;
      invstd[c] = 1.0 / std::sqrt(v + eps);
      stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * m;
      stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * v;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[c] = stats.mean[c];
      invstd[c] = 1.0 / std::sqrt(stats.var[c] + eps);
    }
  }

  std::vector<double> out(xd.size());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = &xd[(n * C + c) * HW];
      double* q = &out[(n * C + c) * HW];
      const double g = gamma.values()[c], b = beta.values()[c];
      for (int64_t i = 0; i < HW; ++i)
        q[i] = g * (p[i] - mean[c]) * invstd[c] + b;
    }

  return make_op_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [N, C, HW, M, training, mean = std::move(mean),
       invstd = std::move(invstd)](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const auto& g = self.grad;
        // Per channel: sum_g, sum_g_xhat drive all three gradients.
        for (int64_t c = 0; c < C; ++c) {
          const double mu = mean[c], is = invstd[c];
          const double gamma_c = gn.data[c];
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double* gp = &g[(n * C + c) * HW];
            const double* xp = &xn.data[(n * C + c) * HW];
            for (int64_t i = 0; i < HW; ++i) {
              sum_g += gp[i];
              sum_gx += gp[i] * (xp[i] - mu) * is;
            }
          }
          if (gn.requires_grad) {
            gn.ensure_grad();
            gn.grad[c] += sum_gx;
          }
          if (bn.requires_grad) {
            bn.ensure_grad();
            bn.grad[c] += sum_g;
          }
          if (xn.requires_grad) {
            xn.ensure_grad();
            const double inv_m = 1.0 / static_cast<double>(M);
            for (int64_t n = 0; n < N; ++n) {
              const double* gp = &g[(n * C + c) * HW];
              const double* xp = &xn.data[(n * C + c) * HW];
              double* dp = &xn.grad[(n * C + c) * HW];
              for (int64_t i = 0; i < HW; ++i) {
                if (training) {
                  const double xhat = (xp[i] - mu) * is;
                  dp[i] += gamma_c * is *
                           (gp[i] - sum_g * inv_m - xhat * sum_gx * inv_m);
                } else {
                  dp[i] += gamma_c * is * gp[i];
                }
              }
            }
          }
        }
      });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out[i] = v * sigmoid_scalar(v);
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i) {
                            const double s = sigmoid_scalar(xn.data[i]);
                            xn.grad[i] += self.grad[i] *
                                          (s + xn.data[i] * s * (1.0 - s));
                          }
                        });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = sigmoid_scalar(x.values()[i]);
  return make_op_result(x.shape(), std::move(out), {x},
                        [](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i) {
                            const double y = self.data[i];
                            xn.grad[i] += self.grad[i] * y * (1.0 - y);
                          }
                        });
}

Tensor maxpool2d(const Tensor& x, int k, int stride) {
  check_4d(x, "maxpool2d");
  check(k >= 1 && stride >= 1, "maxpool2d: k and stride must be >= 1");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(H >= k && W >= k, "maxpool2d: window larger than input");
  const int64_t HO = (H - k) / stride + 1;
  const int64_t WO = (W - k) / stride + 1;
  const auto& xd = x.values();
  std::vector<double> out(N * C * HO * WO);
  std::vector<int64_t> argmax(out.size());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t base = (n * C + c) * H * W;
      for (int64_t oh = 0; oh < HO; ++oh)
        for (int64_t ow = 0; ow < WO; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = -1;
          for (int64_t kh = 0; kh < k; ++kh)
            for (int64_t kw = 0; kw < k; ++kw) {
              const int64_t idx =
                  base + (oh * stride + kh) * W + (ow * stride + kw);
              if (xd[idx] > best) {  // first max wins ties
                best = xd[idx];
                best_idx = idx;
              }
            }
          const int64_t oidx = ((n * C + c) * HO + oh) * WO + ow;
          out[oidx] = best;
          argmax[oidx] = best_idx;
        }
    }
  return make_op_result({N, C, HO, WO}, std::move(out), {x},
                        [argmax = std::move(argmax)](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[argmax[i]] += self.grad[i];
                        });
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  check_4d(x, "upsample_nearest");
  check(factor >= 1, "upsample_nearest: factor must be >= 1");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t HO = H * factor, WO = W * factor;
  const auto& xd = x.values();
  std::vector<double> out(N * C * HO * WO);
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t oh = 0; oh < HO; ++oh)
      for (int64_t ow = 0; ow < WO; ++ow)
        out[(nc * HO + oh) * WO + ow] =
            xd[(nc * H + oh / factor) * W + ow / factor];
  return make_op_result(
      {N, C, HO, WO}, std::move(out), {x},
      [factor, N, C, H, W, HO, WO](detail::Node& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc)
          for (int64_t oh = 0; oh < HO; ++oh)
            for (int64_t ow = 0; ow < WO; ++ow)
              xn.grad[(nc * H + oh / factor) * W + ow / factor] +=
                  self.grad[(nc * HO + oh) * WO + ow];
      });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_channels: no inputs");
  const int64_t N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int64_t C = 0;
  for (const Tensor& t : xs) {
    check_4d(t, "concat_channels");
    check(t.dim(0) == N && t.dim(2) == H && t.dim(3) == W,
          "concat_channels: mismatched N/H/W across inputs");
    C += t.dim(1);
  }
  std::vector<double> out(N * C * H * W);
  const int64_t HW = H * W;
  int64_t c_off = 0;
  for (const Tensor& t : xs) {
    const int64_t tc = t.dim(1);
    for (int64_t n = 0; n < N; ++n)
      std::copy(t.values().begin() + n * tc * HW,
                t.values().begin() + (n + 1) * tc * HW,
                out.begin() + (n * C + c_off) * HW);
    c_off += tc;
  }
  return make_op_result(
      {N, C, H, W}, std::move(out), xs, [N, C, HW](detail::Node& self) {
        int64_t c_off = 0;
        for (auto& parent : self.parents) {
          const int64_t tc = parent->shape[1];
          if (parent->requires_grad) {
            parent->ensure_grad();
            for (int64_t n = 0; n < N; ++n) {
              const double* g = &self.grad[(n * C + c_off) * HW];
              double* d = &parent->grad[n * tc * HW];
              for (int64_t i = 0; i < tc * HW; ++i) d[i] += g[i];
            }
          }
          c_off += tc;
        }
      });
}

Tensor slice_channels(const Tensor& x, int64_t begin, int64_t end) {
  check_4d(x, "slice_channels");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(begin >= 0 && begin < end && end <= C,
        "slice_channels: bad range [" + std::to_string(begin) + "," +
            std::to_string(end) + ") for " + std::to_string(C) + " channels");
  const int64_t SC = end - begin, HW = H * W;
  std::vector<double> out(N * SC * HW);
  for (int64_t n = 0; n < N; ++n)
    std::copy(x.values().begin() + (n * C + begin) * HW,
              x.values().begin() + (n * C + end) * HW,
              out.begin() + n * SC * HW);
  return make_op_result({N, SC, H, W}, std::move(out), {x},
                        [N, C, begin, SC, HW](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (int64_t n = 0; n < N; ++n) {
                            const double* g = &self.grad[n * SC * HW];
                            double* d = &xn.grad[(n * C + begin) * HW];
                            for (int64_t i = 0; i < SC * HW; ++i) d[i] += g[i];
                          }
                        });
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          void (*bwd)(detail::Node&)) {
  check_same_shape(a, b, name);
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = fwd(a.values()[i], b.values()[i]);
  return make_op_result(a.shape(), std::move(out), {a, b}, bwd);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](detail::Node& self) {
        for (auto& p : self.parents) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += self.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](detail::Node& self) {
        auto& an = *self.parents[0];
        auto& bn = *self.parents[1];
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            an.grad[i] += self.grad[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            bn.grad[i] -= self.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](detail::Node& self) {
        auto& an = *self.parents[0];
        auto& bn = *self.parents[1];
        if (an.requires_grad) {
          an.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            an.grad[i] += self.grad[i] * bn.data[i];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            bn.grad[i] += self.grad[i] * an.data[i];
        }
      });
}

Tensor mul_scalar(const Tensor& x, double s) {
  check(std::isfinite(s), "mul_scalar: non-finite scalar");
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * s;
  return make_op_result(x.shape(), std::move(out), {x},
                        [s](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[i] += self.grad[i] * s;
                        });
}

Tensor add_scalar(const Tensor& x, double s) {
  check(std::isfinite(s), "add_scalar: non-finite scalar");
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + s;
  return make_op_result(x.shape(), std::move(out), {x},
                        [](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[i] += self.grad[i];
                        });
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = x.values()[i] * x.values()[i];
  return make_op_result(x.shape(), std::move(out), {x},
                        [](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[i] += self.grad[i] * 2.0 * xn.data[i];
                        });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_op_result({1}, {acc}, {x}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += g;
  });
}

Tensor sqrt_elem(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    // NaN passes through; only genuinely negative inputs are rejected
    check(!(x.values()[i] < 0.0), "sqrt_elem: negative input");
    out[i] = std::sqrt(x.values()[i]);
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[i] += self.grad[i] * 0.5 / self.data[i];
                        });
}

Tensor gather(const Tensor& x, std::vector<int64_t> indices) {
  const int64_t n = x.numel();
  std::vector<double> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    check(indices[i] >= 0 && indices[i] < n,
          "gather: index " + std::to_string(indices[i]) + " out of range for " +
              std::to_string(n) + " elements");
    out[i] = x.values()[indices[i]];
  }
  const int64_t out_len = static_cast<int64_t>(indices.size());
  return make_op_result({out_len}, std::move(out),
                        {x}, [indices = std::move(indices)](detail::Node& self) {
                          auto& xn = *self.parents[0];
                          if (!xn.requires_grad) return;
                          xn.ensure_grad();
                          for (size_t i = 0; i < indices.size(); ++i)
                            xn.grad[indices[i]] += self.grad[i];
                        });
}

}  // namespace pcbdet
