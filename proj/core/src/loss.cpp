#include "pcbdet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

namespace pcbdet {

bool AssignmentMap::assigned(int level, int cell_i, int cell_j,
                             int anchor) const {
  for (const SlotTarget& s : levels[level])
    if (s.cell_i == cell_i && s.cell_j == cell_j && s.anchor == anchor)
      return true;
  return false;
}

int64_t AssignmentMap::total_slots() const {
  int64_t n = 0;
  for (int l = 0; l < kNumLevels; ++l)
    n += static_cast<int64_t>(grid[l]) * grid[l] * kAnchorsPerLevel;
  return n;
}

int64_t AssignmentMap::assigned_slots() const {
  int64_t n = 0;
  for (const auto& level : levels) n += static_cast<int64_t>(level.size());
  return n;
}

AssignmentMap assign_targets(const std::vector<GroundTruthBox>& gts,
                             const DetectorConfig& config) {
  AssignmentMap map;
  for (int l = 0; l < kNumLevels; ++l) map.grid[l] = config.grid_size(l);

  std::set<std::tuple<int, int, int, int>> occupied;  // level, i, j, anchor
  for (const GroundTruthBox& gt : gts) {
    check(gt.box.w > 0.0 && gt.box.h > 0.0,
          "assign_targets: degenerate box (w or h <= 0)");

    // The best shape-matched anchor over all levels picks the level.
    int best_level = 0;
    double best_match = -1.0;
    for (int l = 0; l < kNumLevels; ++l)
      for (int b = 0; b < kAnchorsPerLevel; ++b) {
        const double m = shape_iou(gt.box.w, gt.box.h,
                                   config.anchors[l][b][0],
                                   config.anchors[l][b][1]);
        if (m > best_match) {
          best_match = m;
          best_level = l;
        }
      }

    const int s = map.grid[best_level];
    const int cell_j = std::min(static_cast<int>(gt.box.cx * s), s - 1);
    const int cell_i = std::min(static_cast<int>(gt.box.cy * s), s - 1);

    // Anchors of the chosen level ranked by shape match, ties to the lowest
    // index; an occupied slot falls back to the next-best anchor.
    std::array<int, kAnchorsPerLevel> order{0, 1, 2};
    std::array<double, kAnchorsPerLevel> match{};
    for (int b = 0; b < kAnchorsPerLevel; ++b)
      match[b] = shape_iou(gt.box.w, gt.box.h,
                           config.anchors[best_level][b][0],
                           config.anchors[best_level][b][1]);
    std::stable_sort(order.begin(), order.end(),
                     [&match](int a, int b) { return match[a] > match[b]; });

    bool placed = false;
    for (int anchor : order) {
      const auto key = std::make_tuple(best_level, cell_i, cell_j, anchor);
      if (occupied.count(key)) continue;
      occupied.insert(key);
      map.levels[best_level].push_back(SlotTarget{cell_i, cell_j, anchor, gt});
      placed = true;
      break;
    }
    if (!placed) {
      std::cerr << "warning: dropping ground-truth box at (" << gt.box.cx
                << "," << gt.box.cy << "), all anchors of its cell are taken\n";
      map.dropped.push_back(gt);
    }
  }

  for (auto& level : map.levels)
    std::sort(level.begin(), level.end(),
              [](const SlotTarget& a, const SlotTarget& b) {
                return std::tie(a.cell_i, a.cell_j, a.anchor) <
                       std::tie(b.cell_i, b.cell_j, b.anchor);
              });
  return map;
}

namespace {

// Flat index into an N×B×S×S decoded grid.
int64_t slot_index(int64_t image, int anchor, int cell_i, int cell_j,
                   int64_t s) {
  return ((image * kAnchorsPerLevel + anchor) * s + cell_i) * s + cell_j;
}

// Flat index into an N×(B*K)×S×S class grid.
int64_t class_index(int64_t image, int anchor, int cls, int num_classes,
                    int cell_i, int cell_j, int64_t s) {
  return (((image * kAnchorsPerLevel + anchor) * num_classes + cls) * s +
          cell_i) * s + cell_j;
}

Tensor constant(std::vector<double> values) {
  const int64_t n = static_cast<int64_t>(values.size());
  return Tensor::from_data({n}, std::move(values), false);
}

}  // namespace

LossResult yolo_loss(const DecodedGrids& decoded,
                     const std::vector<AssignmentMap>& assignments,
                     const LossConfig& cfg) {
  check(cfg.lambda_coord >= 0.0 && cfg.lambda_noobj >= 0.0,
        "yolo_loss: lambda weights must be nonnegative");
  const int64_t n_images = decoded[0].cx.dim(0);
  check(static_cast<int64_t>(assignments.size()) == n_images,
        "yolo_loss: " + std::to_string(assignments.size()) +
            " assignment maps for a batch of " + std::to_string(n_images));

  Tensor coord_xy = Tensor::scalar(0.0);
  Tensor coord_wh = Tensor::scalar(0.0);
  Tensor obj_term = Tensor::scalar(0.0);
  Tensor noobj_term = Tensor::scalar(0.0);
  Tensor cls_term = Tensor::scalar(0.0);

  for (int level = 0; level < kNumLevels; ++level) {
    const DecodedLevel& g = decoded[level];
    const int64_t s = g.cx.dim(2);
    const int num_classes = static_cast<int>(g.cls.dim(1)) / kAnchorsPerLevel;

    std::vector<int64_t> slot_idx;
    std::vector<double> tx, ty, tsw, tsh, tconf;
    std::vector<int64_t> cls_idx;
    std::vector<double> cls_target;
    std::vector<double> noobj_mask(g.obj.numel(), 1.0);

    for (int64_t n = 0; n < n_images; ++n) {
      const AssignmentMap& assignment = assignments[n];
      check(assignment.grid[level] == s,
            "yolo_loss: assignment grid does not match decoded grid");
      // Per-cell class mode keeps only the lowest-anchor slot of each cell.
      std::set<std::pair<int, int>> cells_seen;
      for (const SlotTarget& slot : assignment.levels[level]) {
        const int64_t at = slot_index(n, slot.anchor, slot.cell_i,
                                      slot.cell_j, s);
        slot_idx.push_back(at);
        noobj_mask[at] = 0.0;
        tx.push_back(slot.gt.box.cx);
        ty.push_back(slot.gt.box.cy);
        tsw.push_back(std::sqrt(slot.gt.box.w));
        tsh.push_back(std::sqrt(slot.gt.box.h));
        if (cfg.target_confidence == LossConfig::ConfidenceTarget::kOne) {
          tconf.push_back(1.0);
        } else {
          // Detached IoU of the decoded box against its target.
          Box pred{g.cx.values()[at], g.cy.values()[at], g.w.values()[at],
                   g.h.values()[at]};
          tconf.push_back(iou(pred, slot.gt.box));
        }
        const bool fresh =
            cells_seen.insert({slot.cell_i, slot.cell_j}).second;
        if (!cfg.class_term_per_cell || fresh) {
          for (int c = 0; c < num_classes; ++c) {
            cls_idx.push_back(class_index(n, slot.anchor, c, num_classes,
                                          slot.cell_i, slot.cell_j, s));
            cls_target.push_back(c == slot.gt.class_id ? 1.0 : 0.0);
          }
        }
      }
    }

    Tensor mask = Tensor::from_data(g.obj.shape(), std::move(noobj_mask),
                                    false);
    noobj_term = add(noobj_term, sum(mul(mask, square(g.obj))));

    if (slot_idx.empty()) continue;

    Tensor pw = gather(g.w, slot_idx);
    Tensor ph = gather(g.h, slot_idx);
    // non-finite values flow through to the train_step diagnostic
    for (double v : pw.values())
      check(!(v <= 0.0), "yolo_loss: non-positive decoded w");
    for (double v : ph.values())
      check(!(v <= 0.0), "yolo_loss: non-positive decoded h");

    coord_xy = add(coord_xy,
                   add(sum(square(sub(gather(g.cx, slot_idx), constant(tx)))),
                       sum(square(sub(gather(g.cy, slot_idx), constant(ty))))));
    coord_wh = add(coord_wh,
                   add(sum(square(sub(sqrt_elem(pw), constant(tsw)))),
                       sum(square(sub(sqrt_elem(ph), constant(tsh))))));
    obj_term = add(obj_term, sum(square(sub(gather(g.obj, slot_idx),
                                            constant(tconf)))));
    if (!cls_idx.empty())
      cls_term = add(cls_term, sum(square(sub(gather(g.cls, cls_idx),
                                              constant(cls_target)))));
  }

  Tensor total = add(
      add(mul_scalar(add(coord_xy, coord_wh), cfg.lambda_coord), obj_term),
      add(mul_scalar(noobj_term, cfg.lambda_noobj), cls_term));

  LossResult result;
  result.total = total;
  result.parts.coord_xy = coord_xy.item();
  result.parts.coord_wh = coord_wh.item();
  result.parts.obj = obj_term.item();
  result.parts.noobj = noobj_term.item();
  result.parts.cls = cls_term.item();
  result.parts.total = total.item();
  return result;
}

void SgdMomentum::step(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& named : params) {
    Tensor p = named.second;
    if (!p.has_grad()) continue;
    auto& v = velocity[p.id()];
    if (v.empty()) v.assign(p.numel(), 0.0);
    const auto& g = p.grad();
    auto& values = p.values_mut();
    for (size_t i = 0; i < values.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      if (lr != 0.0) values[i] -= lr * v[i];
    }
  }
}

LossBreakdown train_step(DetectorModel& model, const Tensor& batch,
                         const std::vector<std::vector<GroundTruthBox>>& gts,
                         SgdMomentum& opt, const LossConfig& loss_cfg) {
  check(batch.dim(0) == static_cast<int64_t>(gts.size()),
        "train_step: batch of " + std::to_string(batch.dim(0)) +
            " images with " + std::to_string(gts.size()) + " gt lists");
  model.training = true;
  ParamSet set = model.param_set();
  for (auto& [name, p] : set.params) p.zero_grad();

  RawPredictions raw = model.forward(batch);
  DecodedGrids grids = decode_grids(raw, model.config);
  std::vector<AssignmentMap> assignments;
  assignments.reserve(gts.size());
  for (const auto& image_gts : gts)
    assignments.push_back(assign_targets(image_gts, model.config));

  LossResult loss = yolo_loss(grids, assignments, loss_cfg);
  if (!std::isfinite(loss.parts.total)) {
    std::ostringstream os;
    os << "train_step: non-finite loss (coord_xy=" << loss.parts.coord_xy
       << " coord_wh=" << loss.parts.coord_wh << " obj=" << loss.parts.obj
       << " noobj=" << loss.parts.noobj << " cls=" << loss.parts.cls << ")";
    throw Error(os.str());
  }
  backward(loss.total);
  opt.step(set.params);
  return loss.parts;
}

}  // namespace pcbdet
