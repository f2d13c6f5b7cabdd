#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pcbdet/dataset.hpp"
#include "pcbdet/detector.hpp"
#include "pcbdet/postprocess.hpp"

namespace pcbdet {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;  // undefined for detection, always reported 0
};

struct MatchResult {
  ConfusionCounts counts;
  std::vector<bool> det_is_tp;  // aligned with the input detections
};

// Greedy matching of score-sorted detections: each detection takes the
// unmatched same-class gt with the highest IoU >= iou_thresh (ties to the
// lowest gt index); leftover gts are false negatives.
MatchResult match_detections(const std::vector<Detection>& dets_sorted,
                             const std::vector<GroundTruthBox>& gts,
                             double iou_thresh);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = 2PR/(P+R); a metric is
// 0 when its denominator is 0.
Prf precision_recall_f1(const ConfusionCounts& c);

struct DetFlag {
  double score = 0.0;
  bool tp = false;
};

struct PRPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per distinct score, descending threshold
};

// Cumulative precision/recall swept over distinct detection scores from
// high to low. total_gt == 0 yields an empty curve plus a stderr warning.
PRCurve pr_curve(std::vector<DetFlag> flags, int64_t total_gt);

// Area under the precision envelope (running max from the high-recall
// side), rectangle-summed over recall increments from 0. Empty curve -> 0.
double average_precision(const PRCurve& curve);

struct EvalConfig {
  int num_classes = 6;
  std::vector<std::string> class_names;  // defaults to the PCB classes
  double conf_threshold = 0.25;          // for the point P/R/F1 metrics
  double match_iou = 0.5;                // for the point P/R/F1 metrics

  static EvalConfig pcb_defaults();
};

struct ClassEval {
  std::string name;
  double ap = 0.0;    // mean over IoU 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  double precision = 0.0;  // the paper's "accuracy" formula
  double recall = 0.0;
  double f1 = 0.0;
  int64_t gt_count = 0;
};

struct EvalReport {
  std::vector<ClassEval> per_class;
  ClassEval aggregate;  // AP columns macro-averaged, P/R/F1 from pooled counts
  double fps = 0.0;     // 0 when not benchmarked
};

// AP/AP50/AP75 per class (classes without ground truth are excluded from
// the macro averages), point metrics at cfg.conf_threshold.
EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_image,
                    const std::vector<std::vector<GroundTruthBox>>& gts_per_image,
                    const EvalConfig& cfg);

// Key-value header plus a per-class table in AP / AP50 / AP75 / Recall /
// F1-score / Fps column order, percentages. render/parse round-trip.
std::string render_report(const EvalReport& report);
EvalReport parse_report(const std::string& text);

// threshold,precision,recall,f1 rows for one class (or the aggregate).
void write_curve_csv(std::ostream& out, const PRCurve& curve);
// Minimal standalone SVG line plot on a unit-square axis box.
std::string svg_line_plot(const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::string& title);

// ---- throughput ----

struct StageSeconds {
  double normalize = 0.0;
  double forward = 0.0;
  double decode = 0.0;
  double nms = 0.0;
};

struct ThroughputReport {
  int warmup = 0;
  int runs = 0;
  int images_per_run = 0;
  std::vector<double> run_fps;  // measured runs only
  double mean_fps = 0.0;
  double median_fps = 0.0;
  double mean_latency_ms = 0.0;  // per image
  StageSeconds stage_seconds;    // totals over measured runs
  double realtime_threshold_fps = 30.0;
  bool meets_realtime = false;   // mean_fps > threshold
};

// Wall-clock over the full pipeline (normalize -> forward -> decode -> NMS),
// image by image; warmup runs excluded from every statistic.
ThroughputReport fps_bench(DetectorModel& model,
                           const std::vector<DatasetRecord>& images,
                           int warmup, int runs, const NmsConfig& nms_cfg);

std::string render_throughput(const ThroughputReport& report);

}  // namespace pcbdet
