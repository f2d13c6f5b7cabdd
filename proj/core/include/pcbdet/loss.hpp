#pragma once

#include <array>
#include <unordered_map>
#include <vector>

#include "pcbdet/detector.hpp"

namespace pcbdet {

// One responsible (cell, anchor) slot and its regression/class targets.
struct SlotTarget {
  int cell_i = 0;  // row, floor(cy * S)
  int cell_j = 0;  // col, floor(cx * S)
  int anchor = 0;
  GroundTruthBox gt;
};

// The responsibility indicators for one image: assigned slots carry the
// object indicator, every other (cell, anchor) slot is a no-object slot.
struct AssignmentMap {
  std::array<std::vector<SlotTarget>, kNumLevels> levels;
  std::array<int, kNumLevels> grid{0, 0, 0};
  std::vector<GroundTruthBox> dropped;  // gts whose candidate slots were all taken

  bool assigned(int level, int cell_i, int cell_j, int anchor) const;
  int64_t total_slots() const;
  int64_t assigned_slots() const;
};

// Best shape-IoU anchor picks the level; within that level the gt lands in
// the cell containing its center and the best-matching free anchor (ties to
// the lowest anchor index, occupied slots fall back to the next-best anchor
// of that level). Throws on degenerate boxes.
AssignmentMap assign_targets(const std::vector<GroundTruthBox>& gts,
                             const DetectorConfig& config);

struct LossConfig {
  double lambda_coord = 5.0;
  double lambda_noobj = 0.5;
  enum class ConfidenceTarget { kOne, kIou };
  ConfidenceTarget target_confidence = ConfidenceTarget::kOne;
  // Eq-form class term sums once per responsible cell instead of once per
  // assigned slot (identical whenever cells hold at most one assigned slot;
  // the per-cell form uses the lowest-anchor slot of each cell).
  bool class_term_per_cell = false;
};

// The five raw term sums; total applies the lambda weights:
// total = lambda_coord*(coord_xy + coord_wh) + obj + lambda_noobj*noobj + cls
struct LossBreakdown {
  double coord_xy = 0.0;
  double coord_wh = 0.0;
  double obj = 0.0;
  double noobj = 0.0;
  double cls = 0.0;
  double total = 0.0;
};

struct LossResult {
  Tensor total;  // scalar graph tensor, differentiable through the decode
  LossBreakdown parts;
};

// Sum-squared composite loss over all levels and batch images. Confidence
// targets: 1 (or detached IoU of the decoded box against its gt) on
// assigned slots, 0 on no-object slots; class targets one-hot.
LossResult yolo_loss(const DecodedGrids& decoded,
                     const std::vector<AssignmentMap>& assignments,
                     const LossConfig& cfg);

struct SgdMomentum {
  double lr = 0.001;
  double momentum = 0.9;
  std::unordered_map<uint64_t, std::vector<double>> velocity;

  void step(const std::vector<std::pair<std::string, Tensor>>& params);
};

// Forward, loss, backward, SGD update. Returns the loss before the update.
// Throws on non-finite loss.
LossBreakdown train_step(DetectorModel& model, const Tensor& batch,
                         const std::vector<std::vector<GroundTruthBox>>& gts,
                         SgdMomentum& opt, const LossConfig& loss_cfg);

}  // namespace pcbdet
