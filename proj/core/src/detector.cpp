#include "pcbdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace pcbdet {

void DetectorConfig::validate() const {
  check(image_size > 0 && image_size % 32 == 0,
        "config: image_size " + std::to_string(image_size) +
            " must be a positive multiple of 32");
  check(num_classes >= 1, "config: num_classes must be >= 1");
  check(strides == std::array<int, 3>{8, 16, 32},
        "config: strides must be {8,16,32}");
  for (const auto& level : anchors)
    for (const auto& a : level)
      check(a[0] > 0.0 && a[0] <= 1.0 && a[1] > 0.0 && a[1] <= 1.0,
            "config: anchors must lie in (0,1]");
  check(backbone_widths.size() == 3,
        "config: backbone_widths must list the three tap widths");
  check(res2net_scale >= 1, "config: res2net_scale must be >= 1");
  for (int w : backbone_widths) {
    check(w > 0, "config: backbone widths must be positive");
    check(w % res2net_scale == 0,
          "config: width " + std::to_string(w) +
              " not divisible by res2net_scale " +
              std::to_string(res2net_scale));
  }
}

RawPredictions DetectorModel::forward(const Tensor& batch) {
  check(batch.rank() == 4 && batch.dim(1) == 3,
        "forward: batch must be N×3×H×W, got " + shape_str(batch.shape()));
  check(batch.dim(2) == config.image_size && batch.dim(3) == config.image_size,
        "forward: spatial size " + std::to_string(batch.dim(2)) + "×" +
            std::to_string(batch.dim(3)) + " does not match image_size " +
            std::to_string(config.image_size));
  for (double v : batch.values())
    check(v >= 0.0 && v <= 1.0, "forward: pixel values must lie in [0,1]");

  Tensor x = batch;
  std::array<Tensor, 3> taps;  // strides 8, 16, 32
  for (size_t i = 0; i < backbone.size(); ++i) {
    x = backbone[i].forward(x, training);
    if (i >= 2) taps[i - 2] = x;
  }

  Tensor n32 = neck32.forward(taps[2], training);
  Tensor m16 = concat_channels(
      {upsample_nearest(lateral32.forward(n32, training), 2), taps[1]});
  Tensor n16 = neck16.forward(m16, training);
  Tensor m8 = concat_channels(
      {upsample_nearest(lateral16.forward(n16, training), 2), taps[0]});
  Tensor n8 = neck8.forward(m8, training);

  RawPredictions raw;
  raw.levels[0] = heads[0].forward(n8);
  raw.levels[1] = heads[1].forward(n16);
  raw.levels[2] = heads[2].forward(n32);
  return raw;
}

ParamSet DetectorModel::param_set() {
  ParamSet set;
  for (size_t i = 0; i < backbone.size(); ++i)
    backbone[i].collect("backbone." + std::to_string(i) + ".", set);
  lateral32.collect("neck.lateral32.", set);
  lateral16.collect("neck.lateral16.", set);
  neck8.collect("neck.res2net.0.", set);
  neck16.collect("neck.res2net.1.", set);
  neck32.collect("neck.res2net.2.", set);
  for (size_t i = 0; i < heads.size(); ++i)
    heads[i].collect("head." + std::to_string(i) + ".", set);
  return set;
}

StateMap DetectorModel::state_dict() { return param_set().state_dict(); }

void DetectorModel::load_state(const StateMap& state) {
  param_set().load_state(state);
}

DetectorModel build_detector(const DetectorConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  DetectorModel model;
  model.config = config;

  const int w8 = config.backbone_widths[0];
  const int w16 = config.backbone_widths[1];
  const int w32 = config.backbone_widths[2];
  const int stem = std::max(w8 / 2, 1);

  model.backbone.push_back(make_conv_bn_silu(3, stem, 3, 2, 1, rng));
  model.backbone.push_back(make_conv_bn_silu(stem, stem, 3, 2, 1, rng));
  model.backbone.push_back(make_conv_bn_silu(stem, w8, 3, 2, 1, rng));
  model.backbone.push_back(make_conv_bn_silu(w8, w16, 3, 2, 1, rng));
  model.backbone.push_back(make_conv_bn_silu(w16, w32, 3, 2, 1, rng));

  model.lateral32 = make_conv_bn_silu(w32, w16, 1, 1, 0, rng);
  model.lateral16 = make_conv_bn_silu(w16, w8, 1, 1, 0, rng);

  const int s = config.res2net_scale;
  model.neck32 = res2net_init(w32, w32, s, w32 / s, rng.next_u64());
  model.neck16 = res2net_init(2 * w16, w16, s, w16 / s, rng.next_u64());
  model.neck8 = res2net_init(2 * w8, w8, s, w8 / s, rng.next_u64());

  const int head_ch = config.head_channels();
  model.heads[0] = make_conv2d(w8, head_ch, 1, 1, 0, true, rng);
  model.heads[1] = make_conv2d(w16, head_ch, 1, 1, 0, true, rng);
  model.heads[2] = make_conv2d(w32, head_ch, 1, 1, 0, true, rng);
  return model;
}

namespace {

// Constant (non-grad) N×1×S×S grid of column or row indices.
Tensor index_grid(int64_t n, int64_t s, bool columns) {
  std::vector<double> data(n * s * s);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < s; ++i)
      for (int64_t j = 0; j < s; ++j)
        data[(b * s + i) * s + j] = static_cast<double>(columns ? j : i);
  return Tensor::from_data({n, 1, s, s}, std::move(data), false);
}

}  // namespace

DecodedGrids decode_grids(const RawPredictions& raw,
                          const DetectorConfig& config) {
  const int K = config.num_classes;
  const int fields = 5 + K;
  DecodedGrids out;
  for (int level = 0; level < kNumLevels; ++level) {
    const Tensor& t = raw.levels[level];
    check(t.defined() && t.rank() == 4, "decode: undefined level tensor");
    const int64_t S = config.grid_size(level);
    check(t.dim(1) == config.head_channels() && t.dim(2) == S && t.dim(3) == S,
          "decode: level " + std::to_string(level) + " shape " +
              shape_str(t.shape()) + " does not match config");
    const int64_t n = t.dim(0);
    const Tensor cols = index_grid(n, S, true);
    const Tensor rows = index_grid(n, S, false);
    const double inv_s = 1.0 / static_cast<double>(S);

    std::vector<Tensor> cx, cy, w, h, obj, cls;
    for (int b = 0; b < kAnchorsPerLevel; ++b) {
      const int64_t base = static_cast<int64_t>(b) * fields;
      const double aw = config.anchors[level][b][0];
      const double ah = config.anchors[level][b][1];
      cx.push_back(mul_scalar(
          add(sigmoid(slice_channels(t, base + 0, base + 1)), cols), inv_s));
      cy.push_back(mul_scalar(
          add(sigmoid(slice_channels(t, base + 1, base + 2)), rows), inv_s));
      // (2*sigmoid)^2 keeps w,h strictly positive and below 4*anchor
      w.push_back(mul_scalar(
          square(sigmoid(slice_channels(t, base + 2, base + 3))), 4.0 * aw));
      h.push_back(mul_scalar(
          square(sigmoid(slice_channels(t, base + 3, base + 4))), 4.0 * ah));
      obj.push_back(sigmoid(slice_channels(t, base + 4, base + 5)));
      cls.push_back(sigmoid(slice_channels(t, base + 5, base + 5 + K)));
    }
    out[level].cx = concat_channels(cx);
    out[level].cy = concat_channels(cy);
    out[level].w = concat_channels(w);
    out[level].h = concat_channels(h);
    out[level].obj = concat_channels(obj);
    out[level].cls = concat_channels(cls);
  }
  return out;
}

std::vector<std::vector<Detection>> decode_detections(
    const RawPredictions& raw, const DetectorConfig& config) {
  NoGradGuard no_grad;
  const DecodedGrids grids = decode_grids(raw, config);
  const int K = config.num_classes;
  const int64_t n_images = raw.levels[0].dim(0);

  std::vector<std::vector<Detection>> result(n_images);
  for (int level = 0; level < kNumLevels; ++level) {
    const DecodedLevel& g = grids[level];
    const int64_t S = config.grid_size(level);
    const int64_t cells = S * S;
    for (int64_t n = 0; n < n_images; ++n) {
      for (int b = 0; b < kAnchorsPerLevel; ++b) {
        for (int64_t cell = 0; cell < cells; ++cell) {
          const int64_t at = (n * kAnchorsPerLevel + b) * cells + cell;
          int best_c = 0;
          double best_p = g.cls.values()[(n * kAnchorsPerLevel + b) * K * cells + cell];
          for (int c = 1; c < K; ++c) {
            const double p =
                g.cls.values()[((n * kAnchorsPerLevel + b) * K + c) * cells + cell];
            if (p > best_p) {
              best_p = p;
              best_c = c;
            }
          }
          double cx = g.cx.values()[at], cy = g.cy.values()[at];
          double w = g.w.values()[at], h = g.h.values()[at];
          // Clamp to the unit square per axis; axes already inside keep
          // their exact center/size so widths cannot underflow to zero.
          const double x1 = cx - 0.5 * w, x2 = cx + 0.5 * w;
          if (x1 < 0.0 || x2 > 1.0) {
            const double a = std::clamp(x1, 0.0, 1.0);
            const double b = std::clamp(x2, 0.0, 1.0);
            cx = 0.5 * (a + b);
            w = b - a;
          }
          const double y1 = cy - 0.5 * h, y2 = cy + 0.5 * h;
          if (y1 < 0.0 || y2 > 1.0) {
            const double a = std::clamp(y1, 0.0, 1.0);
            const double b = std::clamp(y2, 0.0, 1.0);
            cy = 0.5 * (a + b);
            h = b - a;
          }
          Detection det;
          det.box = Box{cx, cy, w, h};
          det.class_id = best_c;
          det.score = g.obj.values()[at] * best_p;
          result[n].push_back(det);
        }
      }
    }
  }
  return result;
}

std::string detector_config_to_text(const DetectorConfig& config) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "image_size = " << config.image_size << "\n";
  os << "num_classes = " << config.num_classes << "\n";
  os << "res2net_scale = " << config.res2net_scale << "\n";
  os << "backbone_widths =";
  for (int w : config.backbone_widths) os << " " << w;
  os << "\n";
  os << "anchors =";
  for (const auto& level : config.anchors)
    for (const auto& a : level) os << " " << a[0] << " " << a[1];
  os << "\n";
  return os.str();
}

DetectorConfig detector_config_from_text(const std::string& text) {
  DetectorConfig config;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#') continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::istringstream vs(value);
    if (key == "image_size") {
      check(static_cast<bool>(vs >> config.image_size),
            "config: bad image_size");
    } else if (key == "num_classes") {
      check(static_cast<bool>(vs >> config.num_classes),
            "config: bad num_classes");
    } else if (key == "res2net_scale") {
      check(static_cast<bool>(vs >> config.res2net_scale),
            "config: bad res2net_scale");
    } else if (key == "backbone_widths") {
      config.backbone_widths.clear();
      int w;
      while (vs >> w) config.backbone_widths.push_back(w);
    } else if (key == "anchors") {
      for (auto& level : config.anchors)
        for (auto& a : level)
          check(static_cast<bool>(vs >> a[0] >> a[1]),
                "config: anchors must list 18 numbers");
    } else {
      throw Error("config: unknown key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

}  // namespace pcbdet
