#pragma once

#include <algorithm>

namespace pcbdet {

// Axis-aligned box in normalized center form.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return Box{0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }
};

// Intersection over union; 0 when the union is empty. Requires w,h >= 0.
double iou(const Box& a, const Box& b);

// Shape-only IoU of (w,h) rectangles placed co-centered; used for anchor
// matching.
double shape_iou(double w1, double h1, double w2, double h2);

struct GroundTruthBox {
  Box box;
  int class_id = 0;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;  // objectness * best class probability
};

}  // namespace pcbdet
