#include "pcbdet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace pcbdet {

MatchResult match_detections(const std::vector<Detection>& dets_sorted,
                             const std::vector<GroundTruthBox>& gts,
                             double iou_thresh) {
  for (size_t i = 1; i < dets_sorted.size(); ++i)
    check(dets_sorted[i - 1].score >= dets_sorted[i].score,
          "match_detections: detections must be sorted by descending score");

  MatchResult result;
  result.det_is_tp.assign(dets_sorted.size(), false);
  std::vector<char> gt_taken(gts.size(), 0);
  for (size_t d = 0; d < dets_sorted.size(); ++d) {
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g] || gts[g].class_id != dets_sorted[d].class_id) continue;
      const double v = iou(dets_sorted[d].box, gts[g].box);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      gt_taken[best_gt] = 1;
      result.det_is_tp[d] = true;
      result.counts.tp++;
    } else {
      result.counts.fp++;
    }
  }
  result.counts.fn =
      static_cast<int64_t>(gts.size()) - result.counts.tp;
  return result;
}

Prf precision_recall_f1(const ConfusionCounts& c) {
  check(c.tp >= 0 && c.fp >= 0 && c.fn >= 0, "precision_recall_f1: negative counts");
  Prf out;
  const double tp = static_cast<double>(c.tp);
  out.precision = (c.tp + c.fp) > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  out.recall = (c.tp + c.fn) > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

PRCurve pr_curve(std::vector<DetFlag> flags, int64_t total_gt) {
  PRCurve curve;
  if (total_gt == 0) {
    std::cerr << "warning: pr_curve with zero ground truths, empty curve\n";
    return curve;
  }
  std::stable_sort(flags.begin(), flags.end(),
                   [](const DetFlag& a, const DetFlag& b) {
                     return a.score > b.score;
                   });
  int64_t cum_tp = 0, cum_fp = 0;
  for (size_t i = 0; i < flags.size(); ++i) {
    if (flags[i].tp)
      ++cum_tp;
    else
      ++cum_fp;
    // one point per distinct score: emit when the next score differs
    if (i + 1 < flags.size() && flags[i + 1].score == flags[i].score) continue;
    PRPoint p;
    p.threshold = flags[i].score;
    p.recall = static_cast<double>(cum_tp) / static_cast<double>(total_gt);
    p.precision = static_cast<double>(cum_tp) /
                  static_cast<double>(cum_tp + cum_fp);
    curve.points.push_back(p);
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  if (curve.points.empty()) return 0.0;
  const size_t m = curve.points.size();
  // precision envelope: running max from the high-recall side
  std::vector<double> envelope(m);
  double running = 0.0;
  for (size_t i = m; i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < m; ++i) {
    ap += (curve.points[i].recall - prev_recall) * envelope[i];
    prev_recall = curve.points[i].recall;
  }
  return ap;
}

EvalConfig EvalConfig::pcb_defaults() {
  EvalConfig cfg;
  cfg.class_names.assign(kPcbClassNames.begin(), kPcbClassNames.end());
  return cfg;
}

namespace {

constexpr std::array<double, 10> kApIous{0.50, 0.55, 0.60, 0.65, 0.70,
                                         0.75, 0.80, 0.85, 0.90, 0.95};

std::vector<Detection> class_dets_sorted(const std::vector<Detection>& dets,
                                         int class_id) {
  std::vector<Detection> out;
  for (const Detection& d : dets)
    if (d.class_id == class_id) out.push_back(d);
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return out;
}

std::vector<GroundTruthBox> class_gts(const std::vector<GroundTruthBox>& gts,
                                      int class_id) {
  std::vector<GroundTruthBox> out;
  for (const GroundTruthBox& g : gts)
    if (g.class_id == class_id) out.push_back(g);
  return out;
}

}  // namespace

EvalReport evaluate(
    const std::vector<std::vector<Detection>>& dets_per_image,
    const std::vector<std::vector<GroundTruthBox>>& gts_per_image,
    const EvalConfig& cfg) {
  check(dets_per_image.size() == gts_per_image.size(),
        "evaluate: detection/gt image counts differ");
  std::vector<std::string> names = cfg.class_names;
  if (names.empty())
    names.assign(kPcbClassNames.begin(), kPcbClassNames.end());
  check(static_cast<int>(names.size()) == cfg.num_classes,
        "evaluate: class name list does not match num_classes");
  for (const auto& dets : dets_per_image)
    for (const Detection& d : dets)
      check(d.class_id >= 0 && d.class_id < cfg.num_classes,
            "evaluate: unknown detection class id " +
                std::to_string(d.class_id));
  for (const auto& gts : gts_per_image)
    for (const GroundTruthBox& g : gts)
      check(g.class_id >= 0 && g.class_id < cfg.num_classes,
            "evaluate: unknown ground-truth class id " +
                std::to_string(g.class_id));

  EvalReport report;
  ConfusionCounts pooled;
  int present_classes = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    ClassEval ce;
    ce.name = names[c];
    for (const auto& gts : gts_per_image)
      ce.gt_count += static_cast<int64_t>(class_gts(gts, c).size());

    // AP over the IoU sweep, detections pooled across images per threshold
    double ap_sum = 0.0;
    for (double t : kApIous) {
      std::vector<DetFlag> flags;
      for (size_t img = 0; img < dets_per_image.size(); ++img) {
        const auto dets = class_dets_sorted(dets_per_image[img], c);
        const auto gts = class_gts(gts_per_image[img], c);
        const MatchResult m = match_detections(dets, gts, t);
        for (size_t d = 0; d < dets.size(); ++d)
          flags.push_back(DetFlag{dets[d].score, m.det_is_tp[d]});
      }
      double ap = 0.0;
      if (ce.gt_count > 0) ap = average_precision(pr_curve(flags, ce.gt_count));
      ap_sum += ap;
      if (t == 0.50) ce.ap50 = ap;
      if (t == 0.75) ce.ap75 = ap;
    }
    ce.ap = ap_sum / static_cast<double>(kApIous.size());

    // point metrics at the confidence threshold
    ConfusionCounts counts;
    for (size_t img = 0; img < dets_per_image.size(); ++img) {
      std::vector<Detection> dets;
      for (const Detection& d : class_dets_sorted(dets_per_image[img], c))
        if (d.score >= cfg.conf_threshold) dets.push_back(d);
      const auto gts = class_gts(gts_per_image[img], c);
      const MatchResult m = match_detections(dets, gts, cfg.match_iou);
      counts.tp += m.counts.tp;
      counts.fp += m.counts.fp;
      counts.fn += m.counts.fn;
    }
    const Prf prf = precision_recall_f1(counts);
    ce.precision = prf.precision;
    ce.recall = prf.recall;
    ce.f1 = prf.f1;
    pooled.tp += counts.tp;
    pooled.fp += counts.fp;
    pooled.fn += counts.fn;

    if (ce.gt_count > 0) {
      report.aggregate.ap += ce.ap;
      report.aggregate.ap50 += ce.ap50;
      report.aggregate.ap75 += ce.ap75;
      ++present_classes;
    }
    report.aggregate.gt_count += ce.gt_count;
    report.per_class.push_back(std::move(ce));
  }

  report.aggregate.name = "all";
  if (present_classes > 0) {
    report.aggregate.ap /= present_classes;
    report.aggregate.ap50 /= present_classes;
    report.aggregate.ap75 /= present_classes;
  } else {
    std::cerr << "warning: evaluate saw no ground-truth boxes at all\n";
  }
  const Prf prf = precision_recall_f1(pooled);
  report.aggregate.precision = prf.precision;
  report.aggregate.recall = prf.recall;
  report.aggregate.f1 = prf.f1;
  return report;
}

namespace {

std::string pct(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v * 100.0;
  return os.str();
}

void render_row(std::ostream& os, const ClassEval& ce, double fps) {
  os << std::left << std::setw(18) << ce.name << std::right;
  os << std::setw(14) << pct(ce.ap) << std::setw(14) << pct(ce.ap50)
     << std::setw(14) << pct(ce.ap75) << std::setw(14) << pct(ce.recall)
     << std::setw(14) << pct(ce.f1);
  std::ostringstream fs;
  fs << std::setprecision(12) << fps;
  os << std::setw(12) << fs.str() << std::setw(14) << pct(ce.precision)
     << std::setw(8) << ce.gt_count << "\n";
}

}  // namespace

std::string render_report(const EvalReport& report) {
  std::ostringstream os;
  os << "report_version = 1\n";
  os << "fps = " << std::setprecision(12) << report.fps << "\n";
  os << "classes = " << report.per_class.size() << "\n";
  os << "precision_note = accuracy formula TP/(TP+FP), reported as precision\n";
  os << "\n";
  os << std::left << std::setw(18) << "class" << std::right << std::setw(14)
     << "AP" << std::setw(14) << "AP50" << std::setw(14) << "AP75"
     << std::setw(14) << "Recall" << std::setw(14) << "F1-score"
     << std::setw(12) << "Fps" << std::setw(14) << "Precision" << std::setw(8)
     << "GT" << "\n";
  for (const ClassEval& ce : report.per_class) render_row(os, ce, report.fps);
  render_row(os, report.aggregate, report.fps);
  return os.str();
}

EvalReport parse_report(const std::string& text) {
  EvalReport report;
  std::istringstream is(text);
  std::string line;
  size_t classes = 0;
  bool in_table = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (!in_table) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(' ') + 1);
        if (key == "fps") report.fps = std::stod(line.substr(eq + 1));
        if (key == "classes") classes = std::stoul(line.substr(eq + 1));
        continue;
      }
      if (line.rfind("class", 0) == 0) {
        in_table = true;
        continue;
      }
      continue;
    }
    std::istringstream ls(line);
    ClassEval ce;
    double fps_col = 0.0;
    check(static_cast<bool>(ls >> ce.name >> ce.ap >> ce.ap50 >> ce.ap75 >>
                            ce.recall >> ce.f1 >> fps_col >> ce.precision >>
                            ce.gt_count),
          "parse_report: bad table row '" + line + "'");
    ce.ap /= 100.0;
    ce.ap50 /= 100.0;
    ce.ap75 /= 100.0;
    ce.recall /= 100.0;
    ce.f1 /= 100.0;
    ce.precision /= 100.0;
    if (ce.name == "all")
      report.aggregate = ce;
    else
      report.per_class.push_back(ce);
  }
  check(report.per_class.size() == classes,
        "parse_report: expected " + std::to_string(classes) +
            " class rows, found " + std::to_string(report.per_class.size()));
  return report;
}

void write_curve_csv(std::ostream& out, const PRCurve& curve) {
  out << "threshold,precision,recall,f1\n";
  out << std::setprecision(17);
  for (const PRPoint& p : curve.points) {
    const double denom = p.precision + p.recall;
    const double f1 = denom > 0.0 ? 2.0 * p.precision * p.recall / denom : 0.0;
    out << p.threshold << "," << p.precision << "," << p.recall << "," << f1
        << "\n";
  }
}

std::string svg_line_plot(const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::string& title) {
  check(xs.size() == ys.size(), "svg_line_plot: x/y size mismatch");
  const double w = 480, h = 400, m = 50;  // canvas and margin
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\">\n";
  os << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << w - 2 * m
     << "\" height=\"" << h - 2 * m
     << "\" fill=\"white\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">"
     << title << "</text>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10
     << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"15\" y=\"" << h / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << h / 2
     << ")\">" << y_label << "</text>\n";
  if (!xs.empty()) {
    os << "<polyline fill=\"none\" stroke=\"blue\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) {
      const double px = m + std::clamp(xs[i], 0.0, 1.0) * (w - 2 * m);
      const double py = h - m - std::clamp(ys[i], 0.0, 1.0) * (h - 2 * m);
      os << px << "," << py << " ";
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ThroughputReport fps_bench(DetectorModel& model,
                           const std::vector<DatasetRecord>& images,
                           int warmup, int runs, const NmsConfig& nms_cfg) {
  check(runs >= 1, "fps_bench: runs must be >= 1");
  check(warmup >= 0, "fps_bench: warmup must be >= 0");
  check(!images.empty(), "fps_bench: zero benchmark images");

  model.training = false;
  NoGradGuard no_grad;
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  ThroughputReport report;
  report.warmup = warmup;
  report.runs = runs;
  report.images_per_run = static_cast<int>(images.size());

  for (int run = 0; run < warmup + runs; ++run) {
    const bool measured = run >= warmup;
    StageSeconds stage;
    const auto run_start = clock::now();
    for (const DatasetRecord& record : images) {
      auto t0 = clock::now();
      Tensor batch = batch_tensor({&record});
      stage.normalize += seconds_since(t0);

      t0 = clock::now();
      RawPredictions raw = model.forward(batch);
      stage.forward += seconds_since(t0);

      t0 = clock::now();
      auto candidates = decode_detections(raw, model.config);
      stage.decode += seconds_since(t0);

      t0 = clock::now();
      auto kept = nms(candidates[0], nms_cfg);
      stage.nms += seconds_since(t0);
      (void)kept;
    }
    const double run_seconds = seconds_since(run_start);
    if (measured) {
      report.run_fps.push_back(static_cast<double>(images.size()) /
                               run_seconds);
      report.stage_seconds.normalize += stage.normalize;
      report.stage_seconds.forward += stage.forward;
      report.stage_seconds.decode += stage.decode;
      report.stage_seconds.nms += stage.nms;
    }
  }

  report.mean_fps =
      std::accumulate(report.run_fps.begin(), report.run_fps.end(), 0.0) /
      static_cast<double>(report.run_fps.size());
  std::vector<double> sorted = report.run_fps;
  std::sort(sorted.begin(), sorted.end());
  report.median_fps = sorted.size() % 2 == 1
                          ? sorted[sorted.size() / 2]
                          : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                   sorted[sorted.size() / 2]);
  report.mean_latency_ms = 1000.0 / report.mean_fps;
  report.meets_realtime = report.mean_fps > report.realtime_threshold_fps;
  return report;
}

std::string render_throughput(const ThroughputReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "throughput report\n";
  os << "images_per_run = " << report.images_per_run << "\n";
  os << "warmup_runs = " << report.warmup << " (excluded)\n";
  os << "measured_runs = " << report.runs << "\n";
  os << "mean_fps = " << report.mean_fps << "\n";
  os << "median_fps = " << report.median_fps << "\n";
  os << "mean_latency_ms = " << report.mean_latency_ms << "\n";
  const double total = report.stage_seconds.normalize +
                       report.stage_seconds.forward +
                       report.stage_seconds.decode + report.stage_seconds.nms;
  os << "stage        seconds    share\n";
  auto row = [&](const char* name, double s) {
    os << std::left << std::setw(11) << name << std::right << std::setw(9) << s
       << std::setw(8) << std::setprecision(1)
       << (total > 0 ? 100.0 * s / total : 0.0) << "%\n";
    os << std::setprecision(3);
  };
  row("normalize", report.stage_seconds.normalize);
  row("forward", report.stage_seconds.forward);
  row("decode", report.stage_seconds.decode);
  row("nms", report.stage_seconds.nms);
  os << "realtime_" << std::setprecision(0) << report.realtime_threshold_fps
     << "fps = " << (report.meets_realtime ? "PASS" : "FAIL")
     << std::setprecision(3) << " (mean " << report.mean_fps << " fps vs > "
     << std::setprecision(0) << report.realtime_threshold_fps
     << " fps required)\n";
  return os.str();
}

}  // namespace pcbdet
