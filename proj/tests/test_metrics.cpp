#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pcbdet/metrics.hpp"

using namespace pcbdet;

namespace {

Detection det(double cx, double cy, double w, double h, int cls,
              double score) {
  return Detection{Box{cx, cy, w, h}, cls, score};
}

GroundTruthBox gt(double cx, double cy, double w, double h, int cls) {
  return GroundTruthBox{Box{cx, cy, w, h}, cls};
}

}  // namespace

TEST_CASE("matching basics") {
  const auto one = match_detections({det(0.5, 0.5, 0.2, 0.2, 0, 0.9)},
                                    {gt(0.5, 0.5, 0.2, 0.2, 0)}, 0.5);
  CHECK(one.counts.tp == 1);
  CHECK(one.counts.fp == 0);
  CHECK(one.counts.fn == 0);
  CHECK(one.det_is_tp[0]);

  const auto none = match_detections({det(0.5, 0.5, 0.2, 0.2, 0, 0.9)}, {}, 0.5);
  CHECK(none.counts.fp == 1);

  // wrong class never matches
  const auto wrong = match_detections({det(0.5, 0.5, 0.2, 0.2, 1, 0.9)},
                                      {gt(0.5, 0.5, 0.2, 0.2, 0)}, 0.5);
  CHECK(wrong.counts.fp == 1);
  CHECK(wrong.counts.fn == 1);

  CHECK_THROWS_AS(match_detections({det(0, 0, 0.1, 0.1, 0, 0.1),
                                    det(0, 0, 0.1, 0.1, 0, 0.9)},
                                   {}, 0.5),
                  Error);  // unsorted input
}

TEST_CASE("matching equals the brute-force oracle on fuzzed sets") {
  Rng rng(61);
  for (int trial = 0; trial < 80; ++trial) {
    std::vector<Detection> dets;
    const int nd = static_cast<int>(rng.uniform_int(0, 10));
    for (int i = 0; i < nd; ++i) {
      const double w = rng.uniform(0.05, 0.4), h = rng.uniform(0.05, 0.4);
      dets.push_back(det(rng.uniform(w / 2, 1 - w / 2),
                         rng.uniform(h / 2, 1 - h / 2), w, h,
                         static_cast<int>(rng.uniform_int(0, 2)),
                         rng.uniform_int(0, 20) / 20.0));
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) {
                       return a.score > b.score;
                     });
    std::vector<GroundTruthBox> gts;
    const int ng = static_cast<int>(rng.uniform_int(0, 4));
    for (int i = 0; i < ng; ++i) {
      const double w = rng.uniform(0.05, 0.4), h = rng.uniform(0.05, 0.4);
      gts.push_back(gt(rng.uniform(w / 2, 1 - w / 2),
                       rng.uniform(h / 2, 1 - h / 2), w, h,
                       static_cast<int>(rng.uniform_int(0, 2))));
    }
    const auto mine = match_detections(dets, gts, 0.45);
    const auto ref = oracle::match_naive(dets, gts, 0.45);
    CHECK(mine.counts.tp == ref.counts.tp);
    CHECK(mine.counts.fp == ref.counts.fp);
    CHECK(mine.counts.fn == ref.counts.fn);
    CHECK(mine.det_is_tp == ref.det_is_tp);
    CHECK(mine.counts.tp + mine.counts.fp == nd);
    CHECK(mine.counts.tp + mine.counts.fn == ng);
  }
}

TEST_CASE("precision, recall and f1 match the stated formulas") {
  const Prf perfect = precision_recall_f1({1, 0, 0, 0});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const Prf half = precision_recall_f1({1, 1, 1, 0});
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == 0.5);

  // exhaustive over all count triples up to 50
  for (int64_t tp = 0; tp <= 50; ++tp)
    for (int64_t fp = 0; fp <= 50; ++fp)
      for (int64_t fn = 0; fn <= 50; ++fn) {
        const Prf prf = precision_recall_f1({tp, fp, fn, 0});
        const double p =
            tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double r =
            tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        if (prf.precision != p || prf.recall != r || prf.f1 != f) {
          REQUIRE(prf.precision == p);
          REQUIRE(prf.recall == r);
          REQUIRE(prf.f1 == f);
        }
        if (p == r && p > 0)
          REQUIRE(prf.f1 == doctest::Approx(p).epsilon(1e-15));
      }
}

TEST_CASE("pr curve sweeps distinct scores") {
  const PRCurve single = pr_curve({{0.9, true}}, 1);
  REQUIRE(single.points.size() == 1);
  CHECK(single.points[0].recall == 1.0);
  CHECK(single.points[0].precision == 1.0);

  const PRCurve two = pr_curve({{0.9, true}, {0.8, false}}, 1);
  REQUIRE(two.points.size() == 2);
  CHECK(two.points[0].recall == 1.0);
  CHECK(two.points[0].precision == 1.0);
  CHECK(two.points[1].recall == 1.0);
  CHECK(two.points[1].precision == 0.5);

  const PRCurve all_fp = pr_curve({{0.9, false}, {0.5, false}}, 2);
  for (const PRPoint& p : all_fp.points) CHECK(p.precision == 0.0);

  CHECK(pr_curve({{0.9, true}}, 0).points.empty());

  // recall nondecreasing along the sweep
  Rng rng(62);
  std::vector<DetFlag> flags;
  for (int i = 0; i < 40; ++i)
    flags.push_back({rng.uniform_int(0, 15) / 15.0, rng.uniform() < 0.4});
  const PRCurve curve = pr_curve(flags, 12);
  for (size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].recall >= curve.points[i - 1].recall);
    CHECK(curve.points[i].threshold < curve.points[i - 1].threshold);
  }
}

TEST_CASE("average precision examples and envelope monotonicity") {
  PRCurve single;
  single.points.push_back({0.9, 1.0, 1.0});
  CHECK(average_precision(single) == 1.0);

  // envelope holds precision 1 out to recall 1
  const PRCurve two = pr_curve({{0.9, true}, {0.8, false}}, 1);
  CHECK(average_precision(two) == 1.0);

  CHECK(average_precision(PRCurve{}) == 0.0);
}

TEST_CASE("average precision matches dense-threshold integration") {
  Rng rng(63);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<DetFlag> flags;
    const int n = static_cast<int>(rng.uniform_int(1, 18));
    int64_t tps = 0;
    for (int i = 0; i < n; ++i) {
      const bool tp = rng.uniform() < 0.5;
      tps += tp ? 1 : 0;
      flags.push_back({rng.uniform_int(1, 999) / 1000.0, tp});
    }
    // a matcher never yields more true positives than ground truths
    const int64_t total_gt = tps + rng.uniform_int(0, 5);
    if (total_gt == 0) continue;
    const double mine = average_precision(pr_curve(flags, total_gt));
    const double ref = oracle::ap_dense_naive(flags, total_gt);
    CHECK(mine == doctest::Approx(ref).epsilon(1e-9));
    CHECK(mine >= 0.0);
    CHECK(mine <= 1.0);
  }
}

TEST_CASE("average precision depends on score ranks only") {
  Rng rng(64);
  std::vector<DetFlag> flags;
  for (int i = 0; i < 25; ++i)
    flags.push_back({(i + 1) / 26.0, rng.uniform() < 0.5});
  const double base = average_precision(pr_curve(flags, 9));
  for (DetFlag& f : flags) {
    const double s = f.score;
    f.score = 0.05 + 0.9 * s * s * s;  // strictly increasing rescale
  }
  const double rescaled = average_precision(pr_curve(flags, 9));
  CHECK(base == doctest::Approx(rescaled).epsilon(1e-12));
}

TEST_CASE("evaluate: perfect detections score 1 everywhere") {
  EvalConfig cfg = EvalConfig::pcb_defaults();
  std::vector<std::vector<Detection>> dets(2);
  std::vector<std::vector<GroundTruthBox>> gts(2);
  Rng rng(65);
  for (int img = 0; img < 2; ++img)
    for (int k = 0; k < 3; ++k) {
      const double w = rng.uniform(0.1, 0.3), h = rng.uniform(0.1, 0.3);
      const double cx = rng.uniform(w / 2, 1 - w / 2);
      const double cy = rng.uniform(h / 2, 1 - h / 2);
      const int cls = static_cast<int>(rng.uniform_int(0, 5));
      gts[img].push_back(gt(cx, cy, w, h, cls));
      dets[img].push_back(det(cx, cy, w, h, cls, 0.9));
    }
  const EvalReport report = evaluate(dets, gts, cfg);
  CHECK(report.aggregate.ap == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.aggregate.ap50 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.aggregate.ap75 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.aggregate.f1 == doctest::Approx(1.0).epsilon(1e-12));
  // reported F1 always recombines from reported P/R
  for (const ClassEval& ce : report.per_class) {
    const double denom = ce.precision + ce.recall;
    const double f1 = denom > 0 ? 2 * ce.precision * ce.recall / denom : 0.0;
    CHECK(ce.f1 == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("evaluate: empty detections, unknown classes") {
  EvalConfig cfg = EvalConfig::pcb_defaults();
  std::vector<std::vector<Detection>> dets(1);
  std::vector<std::vector<GroundTruthBox>> gts(1);
  gts[0].push_back(gt(0.5, 0.5, 0.2, 0.2, 0));
  const EvalReport report = evaluate(dets, gts, cfg);
  CHECK(report.aggregate.ap == 0.0);
  CHECK(report.aggregate.recall == 0.0);

  dets[0].push_back(det(0.5, 0.5, 0.2, 0.2, 17, 0.9));
  CHECK_THROWS_AS(evaluate(dets, gts, cfg), Error);
}

TEST_CASE("report renders the Table-1 column order and round-trips") {
  EvalReport report;
  for (size_t c = 0; c < kPcbClassNames.size(); ++c) {
    ClassEval ce;
    ce.name = kPcbClassNames[c];
    ce.ap = 0.9 + 0.01 * c;
    ce.ap50 = 0.99;
    ce.ap75 = 0.97;
    ce.recall = 0.186 + 0.001 * c;
    ce.f1 = 0.85;
    ce.precision = 0.79;
    ce.gt_count = 10 + c;
    report.per_class.push_back(ce);
  }
  // the published aggregate row: AP 95.8, AP50 99.6, AP75 97.4,
  // Recall 18.8, F1 85.6, Fps 92
  report.aggregate.name = "all";
  report.aggregate.ap = 0.958;
  report.aggregate.ap50 = 0.996;
  report.aggregate.ap75 = 0.974;
  report.aggregate.recall = 0.188;
  report.aggregate.f1 = 0.856;
  report.aggregate.precision = 0.852;
  report.aggregate.gt_count = 75;
  report.fps = 92.0;

  const std::string text = render_report(report);
  const size_t header = text.find("class ");  // the table header row
  REQUIRE(header != std::string::npos);
  const std::string cols = text.substr(header, text.find('\n', header) - header);
  // Table-1 column order
  CHECK(cols.find("AP") < cols.find("AP50"));
  CHECK(cols.find("AP50") < cols.find("AP75"));
  CHECK(cols.find("AP75") < cols.find("Recall"));
  CHECK(cols.find("Recall") < cols.find("F1-score"));
  CHECK(cols.find("F1-score") < cols.find("Fps"));
  CHECK(text.find("95.8") != std::string::npos);
  CHECK(text.find("99.6") != std::string::npos);
  CHECK(text.find("18.8") != std::string::npos);
  CHECK(text.find("85.6") != std::string::npos);

  const EvalReport parsed = parse_report(text);
  CHECK(parsed.fps == doctest::Approx(92.0).epsilon(1e-12));
  CHECK(parsed.aggregate.ap == doctest::Approx(0.958).epsilon(1e-9));
  CHECK(parsed.aggregate.ap50 == doctest::Approx(0.996).epsilon(1e-9));
  CHECK(parsed.aggregate.ap75 == doctest::Approx(0.974).epsilon(1e-9));
  CHECK(parsed.aggregate.recall == doctest::Approx(0.188).epsilon(1e-9));
  CHECK(parsed.aggregate.f1 == doctest::Approx(0.856).epsilon(1e-9));
  REQUIRE(parsed.per_class.size() == 6);
  CHECK(parsed.per_class[3].ap == doctest::Approx(0.93).epsilon(1e-9));
  CHECK(parsed.per_class[3].gt_count == 13);
}

TEST_CASE("curve export and svg plot") {
  const PRCurve curve = pr_curve({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
  std::stringstream buf;
  write_curve_csv(buf, curve);
  std::string line;
  std::getline(buf, line);
  CHECK(line == "threshold,precision,recall,f1");
  int rows = 0;
  while (std::getline(buf, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(curve.points.size()));

  std::vector<double> xs, ys;
  for (const PRPoint& p : curve.points) {
    xs.push_back(p.recall);
    ys.push_back(p.precision);
  }
  const std::string svg = svg_line_plot(xs, ys, "recall", "precision", "PR");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("fps bench on a tiny model") {
  DetectorConfig config;
  config.image_size = 32;
  config.num_classes = 2;
  config.backbone_widths = {4, 8, 8};
  config.res2net_scale = 4;
  DetectorModel model = build_detector(config, 2);

  SynthConfig synth;
  synth.image_size = 32;
  synth.min_defects = 0;
  synth.max_defects = 2;
  const auto images = synth_dataset(71, 4, synth);

  const ThroughputReport report = fps_bench(model, images, 1, 3, NmsConfig{});
  CHECK(report.run_fps.size() == 3);  // warmup excluded
  CHECK(report.mean_fps > 0.0);
  CHECK(report.median_fps > 0.0);
  CHECK(report.stage_seconds.forward > 0.0);
  const std::string text = render_throughput(report);
  CHECK(text.find("realtime_30fps") != std::string::npos);
  CHECK(text.find("normalize") != std::string::npos);
  CHECK(text.find("forward") != std::string::npos);
  CHECK(text.find("decode") != std::string::npos);
  CHECK(text.find("nms") != std::string::npos);

  CHECK_THROWS_AS(fps_bench(model, {}, 0, 1, NmsConfig{}), Error);
  CHECK_THROWS_AS(fps_bench(model, images, 0, 0, NmsConfig{}), Error);
}

TEST_CASE("per-image latency is stable when the image count doubles") {
  DetectorConfig config;
  config.image_size = 32;
  config.num_classes = 2;
  config.backbone_widths = {4, 8, 8};
  config.res2net_scale = 4;
  DetectorModel model = build_detector(config, 2);

  SynthConfig synth;
  synth.image_size = 32;
  synth.min_defects = 0;
  synth.max_defects = 2;
  const auto base = synth_dataset(72, 8, synth);
  const auto doubled = synth_dataset(72, 16, synth);

  const ThroughputReport a = fps_bench(model, base, 2, 5, NmsConfig{});
  const ThroughputReport b = fps_bench(model, doubled, 2, 5, NmsConfig{});
  const double ratio = a.median_fps / b.median_fps;
  CHECK(ratio > 0.8);
  CHECK(ratio < 1.2);
}
