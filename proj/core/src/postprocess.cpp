#include "pcbdet/postprocess.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pcbdet/common.hpp"

namespace pcbdet {

double iou(const Box& a, const Box& b) {
  // all areas from the same corner arithmetic so identical boxes give 1.0
  const double ax1 = a.x1(), ax2 = a.x2(), ay1 = a.y1(), ay2 = a.y2();
  const double bx1 = b.x1(), bx2 = b.x2(), by1 = b.y1(), by2 = b.y2();
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni =
      (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

double shape_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  const double uni = w1 * h1 + w2 * h2 - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

void NmsConfig::validate() const {
  check(conf_threshold >= 0.0 && conf_threshold <= 1.0,
        "nms: conf_threshold must lie in [0,1]");
  check(iou_threshold >= 0.0 && iou_threshold <= 1.0,
        "nms: iou_threshold must lie in [0,1]");
  check(max_detections > 0, "nms: max_detections must be positive");
}

std::vector<Detection> nms(const std::vector<Detection>& candidates,
                           const NmsConfig& cfg) {
  cfg.validate();

  std::vector<size_t> order;
  order.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].score >= cfg.conf_threshold) order.push_back(i);
  // descending score, ties by input index
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return candidates[a].score > candidates[b].score;
  });

  std::vector<Detection> kept;
  std::vector<char> suppressed(candidates.size(), 0);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(candidates[i]);
    if (static_cast<int>(kept.size()) >= cfg.max_detections) break;
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (suppressed[j] || candidates[j].class_id != candidates[i].class_id)
        continue;
      if (iou(candidates[i].box, candidates[j].box) > cfg.iou_threshold)
        suppressed[j] = 1;
    }
  }
  return kept;
}

void write_detections_csv(std::ostream& out,
                          const std::vector<DetectionRecord>& records,
                          const std::vector<std::string>& class_names) {
  out << "image_id,class,score,cx,cy,w,h\n";
  out << std::setprecision(17);
  for (const DetectionRecord& r : records) {
    check(r.det.class_id >= 0 &&
              r.det.class_id < static_cast<int>(class_names.size()),
          "detections_csv: class id " + std::to_string(r.det.class_id) +
              " has no name");
    out << r.image_id << "," << class_names[r.det.class_id] << ","
        << r.det.score << "," << r.det.box.cx << "," << r.det.box.cy << ","
        << r.det.box.w << "," << r.det.box.h << "\n";
  }
}

std::vector<DetectionRecord> read_detections_csv(
    std::istream& in, const std::vector<std::string>& class_names) {
  std::vector<DetectionRecord> records;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    check(fields.size() == 7, "detections_csv: expected 7 fields, got " +
                                  std::to_string(fields.size()));
    DetectionRecord r;
    r.image_id = fields[0];
    const auto it =
        std::find(class_names.begin(), class_names.end(), fields[1]);
    check(it != class_names.end(),
          "detections_csv: unknown class '" + fields[1] + "'");
    r.det.class_id = static_cast<int>(it - class_names.begin());
    r.det.score = std::stod(fields[2]);
    r.det.box = Box{std::stod(fields[3]), std::stod(fields[4]),
                    std::stod(fields[5]), std::stod(fields[6])};
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace pcbdet
