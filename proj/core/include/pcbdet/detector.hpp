#pragma once

#include <array>
#include <string>
#include <vector>

#include "pcbdet/boxes.hpp"
#include "pcbdet/res2net.hpp"

namespace pcbdet {

inline constexpr int kNumLevels = 3;
inline constexpr int kAnchorsPerLevel = 3;

struct DetectorConfig {
  int image_size = 320;  // square, divisible by 32
  int num_classes = 6;
  // Normalized (w, h) priors, one triple per stride level.
  std::array<std::array<std::array<double, 2>, kAnchorsPerLevel>, kNumLevels>
      anchors{{{{{0.05, 0.05}, {0.1, 0.1}, {0.15, 0.1}}},
               {{{0.2, 0.2}, {0.3, 0.2}, {0.2, 0.3}}},
               {{{0.4, 0.4}, {0.6, 0.4}, {0.7, 0.7}}}}};
  std::array<int, kNumLevels> strides{8, 16, 32};
  // Backbone channel widths at the stride-8/16/32 taps; the two stem stages
  // ramp up to widths[0].
  std::vector<int> backbone_widths{32, 64, 128};
  int res2net_scale = 4;

  void validate() const;  // throws on invalid fields
  int grid_size(int level) const { return image_size / strides[level]; }
  int head_channels() const { return kAnchorsPerLevel * (5 + num_classes); }
};

// Per level: N × B*(5+K) × S × S raw head outputs, channel layout per anchor
// (tx, ty, tw, th, tobj, tc_1..tc_K).
struct RawPredictions {
  std::array<Tensor, kNumLevels> levels;
};

// Decoded per-level grids as graph tensors; cx/cy/w/h/obj are N×B×S×S and
// cls is N×B*K×S×S (class probs grouped per anchor).
struct DecodedLevel {
  Tensor cx, cy, w, h, obj;
  Tensor cls;
};
using DecodedGrids = std::array<DecodedLevel, kNumLevels>;

struct DetectorModel {
  DetectorConfig config;
  bool training = true;

  std::vector<ConvBnSilu> backbone;  // 5 stride-2 stages, taps at 8/16/32
  ConvBnSilu lateral32;              // 1×1: w32 -> w16 before upsample
  ConvBnSilu lateral16;              // 1×1: w16 -> w8 before upsample
  Res2NetBlock neck32;               // w32 -> w32
  Res2NetBlock neck16;               // 2*w16 -> w16 after concat merge
  Res2NetBlock neck8;                // 2*w8 -> w8 after concat merge
  std::array<Conv2dLayer, kNumLevels> heads;  // 1×1 -> B*(5+K), with bias

  // batch: N×3×image_size×image_size, pixel values in [0,1].
  RawPredictions forward(const Tensor& batch);

  ParamSet param_set();  // paths under backbone.* / neck.* / head.*
  StateMap state_dict();
  void load_state(const StateMap& state);
};

DetectorModel build_detector(const DetectorConfig& config, uint64_t seed);

// Differentiable decode:
//   cx = (j + sigmoid(tx)) / S        cy = (i + sigmoid(ty)) / S
//   w  = anchor_w * (2*sigmoid(tw))^2 h  = anchor_h * (2*sigmoid(th))^2
//   obj / cls = sigmoid                (w, h strictly positive by range)
DecodedGrids decode_grids(const RawPredictions& raw,
                          const DetectorConfig& config);

// Per-image detection candidates (every slot, before confidence filtering
// and NMS). Score = objectness * best class prob; boxes clamped to the unit
// square.
std::vector<std::vector<Detection>> decode_detections(
    const RawPredictions& raw, const DetectorConfig& config);

// DetectorConfig <-> flat key=value text, stored alongside checkpoints.
std::string detector_config_to_text(const DetectorConfig& config);
DetectorConfig detector_config_from_text(const std::string& text);

}  // namespace pcbdet
