#pragma once

// Reference implementations used as independent oracles. Straight-line
// scalar code, kept deliberately separate from the library's operator
// paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pcbdet/boxes.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/loss.hpp"
#include "pcbdet/metrics.hpp"
#include "pcbdet/postprocess.hpp"

namespace oracle {

// Direct six-nested-loop convolution.
inline std::vector<double> conv2d_naive(const std::vector<double>& x,
                                        int64_t n, int64_t c, int64_t h,
                                        int64_t w, const std::vector<double>& k,
                                        int64_t o, int64_t kh, int64_t kw,
                                        int stride, int pad) {
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * o * ho * wo, 0.0);
  for (int64_t in = 0; in < n; ++in)
    for (int64_t io = 0; io < o; ++io)
      for (int64_t ic = 0; ic < c; ++ic)
        for (int64_t ikh = 0; ikh < kh; ++ikh)
          for (int64_t ikw = 0; ikw < kw; ++ikw)
            for (int64_t ioh = 0; ioh < ho; ++ioh)
              for (int64_t iow = 0; iow < wo; ++iow) {
                const int64_t ih = ioh * stride - pad + ikh;
                const int64_t iw = iow * stride - pad + ikw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                out[((in * o + io) * ho + ioh) * wo + iow] +=
                    x[((in * c + ic) * h + ih) * w + iw] *
                    k[((io * c + ic) * kh + ikh) * kw + ikw];
              }
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// ---- straight-line Res2Net composition ----

struct FlatImage {
  std::vector<double> data;
  int64_t n = 0, c = 0, h = 0, w = 0;
};

// conv -> training-mode batchnorm (batch statistics) -> SiLU, scalar code.
inline FlatImage conv_bn_silu_naive(const FlatImage& x,
                                    const pcbdet::ConvBnSilu& layer) {
  const auto& kshape = layer.weight.shape();
  const int64_t o = kshape[0], kh = kshape[2], kw = kshape[3];
  FlatImage y;
  y.n = x.n;
  y.c = o;
  y.h = (x.h + 2 * layer.pad - kh) / layer.stride + 1;
  y.w = (x.w + 2 * layer.pad - kw) / layer.stride + 1;
  y.data = conv2d_naive(x.data, x.n, x.c, x.h, x.w, layer.weight.values(), o,
                        kh, kw, layer.stride, layer.pad);
  const int64_t hw = y.h * y.w, m = y.n * hw;
  for (int64_t c = 0; c < o; ++c) {
    double mean = 0.0;
    for (int64_t b = 0; b < y.n; ++b)
      for (int64_t i = 0; i < hw; ++i) mean += y.data[(b * o + c) * hw + i];
    mean /= m;
    double var = 0.0;
    for (int64_t b = 0; b < y.n; ++b)
      for (int64_t i = 0; i < hw; ++i) {
        const double d = y.data[(b * o + c) * hw + i] - mean;
        var += d * d;
      }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    const double gamma = layer.gamma.values()[c];
    const double beta = layer.beta.values()[c];
    for (int64_t b = 0; b < y.n; ++b)
      for (int64_t i = 0; i < hw; ++i) {
        double& v = y.data[(b * o + c) * hw + i];
        v = gamma * (v - mean) * inv + beta;
        v = v * sigmoid(v);
      }
  }
  return y;
}

inline FlatImage res2net_naive(const FlatImage& x, pcbdet::Res2NetBlock& block) {
  FlatImage u = conv_bn_silu_naive(x, block.reduce);
  const int64_t hw = u.h * u.w, width = block.width;
  auto slice = [&](int split) {
    FlatImage s;
    s.n = u.n;
    s.c = width;
    s.h = u.h;
    s.w = u.w;
    s.data.resize(u.n * width * hw);
    for (int64_t b = 0; b < u.n; ++b)
      for (int64_t c = 0; c < width; ++c)
        std::copy(&u.data[(b * u.c + split * width + c) * hw],
                  &u.data[(b * u.c + split * width + c) * hw + hw],
                  &s.data[(b * width + c) * hw]);
    return s;
  };
  std::vector<FlatImage> ys;
  for (int i = 0; i < block.scale; ++i) {
    FlatImage xi = slice(i);
    if (i == 0) {
      ys.push_back(xi);
    } else {
      for (size_t k = 0; k < xi.data.size(); ++k) xi.data[k] += ys.back().data[k];
      ys.push_back(conv_bn_silu_naive(xi, block.group[i - 1]));
    }
  }
  FlatImage merged;
  merged.n = u.n;
  merged.c = u.c;
  merged.h = u.h;
  merged.w = u.w;
  merged.data.resize(u.data.size());
  for (int64_t b = 0; b < u.n; ++b)
    for (int i = 0; i < block.scale; ++i)
      std::copy(ys[i].data.begin() + b * width * hw,
                ys[i].data.begin() + (b + 1) * width * hw,
                merged.data.begin() + (b * u.c + i * width) * hw);
  FlatImage expanded = conv_bn_silu_naive(merged, block.expand);
  FlatImage residual =
      block.has_projection ? conv_bn_silu_naive(x, block.projection) : x;
  FlatImage out = expanded;
  for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += residual.data[k];
  return out;
}

// Scalar per-slot decode of one level's raw head output (image n).
struct DecodedSlot {
  double cx, cy, w, h, obj;
  std::vector<double> cls;
};

inline DecodedSlot decode_slot_naive(const std::vector<double>& raw,
                                     int64_t image, int64_t s, int anchor,
                                     int num_classes, int cell_i, int cell_j,
                                     double anchor_w, double anchor_h) {
  const int fields = 5 + num_classes;
  const int64_t channels = 3 * fields;
  auto at = [&](int field) {
    const int64_t ch = anchor * fields + field;
    return raw[((image * channels + ch) * s + cell_i) * s + cell_j];
  };
  DecodedSlot slot;
  slot.cx = (cell_j + sigmoid(at(0))) / static_cast<double>(s);
  slot.cy = (cell_i + sigmoid(at(1))) / static_cast<double>(s);
  const double sw = 2.0 * sigmoid(at(2));
  const double sh = 2.0 * sigmoid(at(3));
  slot.w = anchor_w * sw * sw;
  slot.h = anchor_h * sh * sh;
  slot.obj = sigmoid(at(4));
  for (int c = 0; c < num_classes; ++c) slot.cls.push_back(sigmoid(at(5 + c)));
  return slot;
}

// Flat scalar summation of the five composite-loss terms: walks every
// (cell, anchor) slot of every level and image directly.
inline pcbdet::LossBreakdown eq1_loss_naive(
    const pcbdet::DecodedGrids& grids,
    const std::vector<pcbdet::AssignmentMap>& assignments,
    const pcbdet::LossConfig& cfg) {
  auto sq = [](double v) { return v * v; };
  pcbdet::LossBreakdown out;
  const int64_t n_images = grids[0].cx.dim(0);
  for (int64_t n = 0; n < n_images; ++n) {
    for (int level = 0; level < pcbdet::kNumLevels; ++level) {
      const pcbdet::DecodedLevel& g = grids[level];
      const int64_t s = g.cx.dim(2);
      const int num_classes =
          static_cast<int>(g.cls.dim(1)) / pcbdet::kAnchorsPerLevel;
      std::vector<char> cell_counted(s * s, 0);
      for (int b = 0; b < pcbdet::kAnchorsPerLevel; ++b)
        for (int64_t i = 0; i < s; ++i)
          for (int64_t j = 0; j < s; ++j) {
            const int64_t at =
                ((n * pcbdet::kAnchorsPerLevel + b) * s + i) * s + j;
            const pcbdet::SlotTarget* target = nullptr;
            for (const pcbdet::SlotTarget& t : assignments[n].levels[level])
              if (t.cell_i == i && t.cell_j == j && t.anchor == b) target = &t;
            const double conf = g.obj.values()[at];
            if (!target) {
              out.noobj += sq(conf);
              continue;
            }
            out.coord_xy += sq(g.cx.values()[at] - target->gt.box.cx) +
                            sq(g.cy.values()[at] - target->gt.box.cy);
            out.coord_wh +=
                sq(std::sqrt(g.w.values()[at]) - std::sqrt(target->gt.box.w)) +
                sq(std::sqrt(g.h.values()[at]) - std::sqrt(target->gt.box.h));
            double conf_target = 1.0;
            if (cfg.target_confidence ==
                pcbdet::LossConfig::ConfidenceTarget::kIou) {
              const pcbdet::Box pred{g.cx.values()[at], g.cy.values()[at],
                                     g.w.values()[at], g.h.values()[at]};
              conf_target = pcbdet::iou(pred, target->gt.box);
            }
            out.obj += sq(conf - conf_target);
            const bool fresh = !cell_counted[i * s + j];
            cell_counted[i * s + j] = 1;
            if (!cfg.class_term_per_cell || fresh) {
              for (int c = 0; c < num_classes; ++c) {
                const double p =
                    g.cls.values()[((n * pcbdet::kAnchorsPerLevel + b) *
                                        num_classes + c) * s * s + i * s + j];
                out.cls += sq(p - (c == target->gt.class_id ? 1.0 : 0.0));
              }
            }
          }
    }
  }
  out.total = cfg.lambda_coord * (out.coord_xy + out.coord_wh) + out.obj +
              cfg.lambda_noobj * out.noobj + out.cls;
  return out;
}

// O(n^2) reference NMS mirroring the stated contract.
inline std::vector<pcbdet::Detection> nms_quadratic(
    const std::vector<pcbdet::Detection>& candidates,
    const pcbdet::NmsConfig& cfg) {
  struct Entry {
    pcbdet::Detection det;
    size_t index;
  };
  std::vector<Entry> pool;
  for (size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].score >= cfg.conf_threshold)
      pool.push_back({candidates[i], i});
  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    if (a.det.score != b.det.score) return a.det.score > b.det.score;
    return a.index < b.index;
  });
  std::vector<pcbdet::Detection> kept;
  std::vector<char> dead(pool.size(), 0);
  for (size_t i = 0; i < pool.size(); ++i) {
    if (dead[i]) continue;
    if (static_cast<int>(kept.size()) >= cfg.max_detections) break;
    kept.push_back(pool[i].det);
    for (size_t j = i + 1; j < pool.size(); ++j)
      if (!dead[j] && pool[j].det.class_id == pool[i].det.class_id &&
          pcbdet::iou(pool[i].det.box, pool[j].det.box) > cfg.iou_threshold)
        dead[j] = 1;
  }
  return kept;
}

// Greedy matcher re-derived independently; walks detections in order and
// exhaustively scans gts.
inline pcbdet::MatchResult match_naive(
    const std::vector<pcbdet::Detection>& dets,
    const std::vector<pcbdet::GroundTruthBox>& gts, double thresh) {
  pcbdet::MatchResult r;
  r.det_is_tp.assign(dets.size(), false);
  std::vector<char> used(gts.size(), 0);
  for (size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    int pick = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].class_id != dets[d].class_id) continue;
      const double v = pcbdet::iou(dets[d].box, gts[g].box);
      if (v >= thresh && v > best) {
        best = v;
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0) {
      used[pick] = 1;
      r.det_is_tp[d] = true;
      r.counts.tp++;
    } else {
      r.counts.fp++;
    }
  }
  r.counts.fn = static_cast<int64_t>(gts.size()) - r.counts.tp;
  return r;
}

// Dense-threshold numeric integration: sweeps a fine uniform threshold
// grid, evaluates cumulative precision/recall at each threshold by direct
// counting, envelopes, and rectangle-sums over recall increments. Exact
// (up to roundoff) whenever every distinct score is isolated between grid
// thresholds, so fuzz scores should be quantized (e.g. multiples of 1e-3).
inline double ap_dense_naive(const std::vector<pcbdet::DetFlag>& flags,
                             int64_t total_gt, int grid = 200001) {
  if (total_gt == 0 || flags.empty()) return 0.0;
  std::vector<double> recalls, precisions;
  for (int g = grid - 1; g >= 0; --g) {  // descending threshold
    const double t = static_cast<double>(g) / (grid - 1);
    int64_t tp = 0, fp = 0;
    for (const pcbdet::DetFlag& f : flags) {
      if (f.score >= t) {
        if (f.tp)
          ++tp;
        else
          ++fp;
      }
    }
    if (tp + fp == 0) continue;
    recalls.push_back(static_cast<double>(tp) / total_gt);
    precisions.push_back(static_cast<double>(tp) / (tp + fp));
  }
  if (recalls.empty()) return 0.0;
  for (size_t i = recalls.size() - 1; i-- > 0;)
    precisions[i] = std::max(precisions[i], precisions[i + 1]);
  double area = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < recalls.size(); ++i) {
    area += (recalls[i] - prev_recall) * precisions[i];
    prev_recall = recalls[i];
  }
  return area;
}

// Exhaustive slot-assignment re-derivation following the stated rule.
inline pcbdet::AssignmentMap assign_naive(
    const std::vector<pcbdet::GroundTruthBox>& gts,
    const pcbdet::DetectorConfig& config) {
  pcbdet::AssignmentMap map;
  for (int l = 0; l < pcbdet::kNumLevels; ++l)
    map.grid[l] = config.grid_size(l);
  std::vector<std::vector<std::vector<char>>> taken(pcbdet::kNumLevels);
  for (int l = 0; l < pcbdet::kNumLevels; ++l)
    taken[l].assign(map.grid[l] * map.grid[l],
                    std::vector<char>(pcbdet::kAnchorsPerLevel, 0));
  for (const pcbdet::GroundTruthBox& gt : gts) {
    double best = -1.0;
    int best_level = 0;
    for (int l = 0; l < pcbdet::kNumLevels; ++l)
      for (int b = 0; b < pcbdet::kAnchorsPerLevel; ++b) {
        const double m =
            pcbdet::shape_iou(gt.box.w, gt.box.h, config.anchors[l][b][0],
                              config.anchors[l][b][1]);
        if (m > best) {
          best = m;
          best_level = l;
        }
      }
    const int s = map.grid[best_level];
    const int j = std::min(static_cast<int>(gt.box.cx * s), s - 1);
    const int i = std::min(static_cast<int>(gt.box.cy * s), s - 1);
    // anchors ranked by shape match, stable on ties
    std::vector<int> order{0, 1, 2};
    std::vector<double> m(pcbdet::kAnchorsPerLevel);
    for (int b = 0; b < pcbdet::kAnchorsPerLevel; ++b)
      m[b] = pcbdet::shape_iou(gt.box.w, gt.box.h,
                               config.anchors[best_level][b][0],
                               config.anchors[best_level][b][1]);
    std::stable_sort(order.begin(), order.end(),
                     [&m](int a, int b) { return m[a] > m[b]; });
    bool placed = false;
    for (int b : order) {
      if (taken[best_level][i * s + j][b]) continue;
      taken[best_level][i * s + j][b] = 1;
      map.levels[best_level].push_back(pcbdet::SlotTarget{i, j, b, gt});
      placed = true;
      break;
    }
    if (!placed) map.dropped.push_back(gt);
  }
  for (auto& level : map.levels)
    std::sort(level.begin(), level.end(),
              [](const pcbdet::SlotTarget& a, const pcbdet::SlotTarget& b) {
                if (a.cell_i != b.cell_i) return a.cell_i < b.cell_i;
                if (a.cell_j != b.cell_j) return a.cell_j < b.cell_j;
                return a.anchor < b.anchor;
              });
  return map;
}

}  // namespace oracle
