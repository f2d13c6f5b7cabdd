#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pcbdet/boxes.hpp"

namespace pcbdet {

struct NmsConfig {
  double conf_threshold = 0.25;
  double iou_threshold = 0.45;
  int max_detections = 300;

  void validate() const;
};

// Confidence filter, then greedy per-class suppression of boxes overlapping
// a kept higher-scored box of the same class. Output ordered by descending
// score (ties by input index) and truncated to max_detections.
std::vector<Detection> nms(const std::vector<Detection>& candidates,
                           const NmsConfig& cfg);

// Detection dump row: image id, class name, score, cx, cy, w, h.
struct DetectionRecord {
  std::string image_id;
  Detection det;
};

void write_detections_csv(std::ostream& out,
                          const std::vector<DetectionRecord>& records,
                          const std::vector<std::string>& class_names);
std::vector<DetectionRecord> read_detections_csv(
    std::istream& in, const std::vector<std::string>& class_names);

}  // namespace pcbdet
