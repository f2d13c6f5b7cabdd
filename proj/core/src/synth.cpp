#include <algorithm>
#include <cmath>
#include <string>

#include "pcbdet/common.hpp"
#include "pcbdet/dataset.hpp"

namespace pcbdet {

namespace {

struct Color {
  double r, g, b;
};

constexpr Color kBoard{0.02, 0.35, 0.10};
constexpr Color kCopper{0.72, 0.58, 0.25};
constexpr Color kPad{0.85, 0.72, 0.35};
constexpr Color kHole{0.05, 0.05, 0.05};

void put(ImageBuffer& img, int y, int x, const Color& c) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
  img.at(y, x, 0) = c.r;
  img.at(y, x, 1) = c.g;
  img.at(y, x, 2) = c.b;
}

void fill_rect(ImageBuffer& img, int x0, int y0, int x1, int y1,
               const Color& c) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) put(img, y, x, c);
}

void fill_disc(ImageBuffer& img, int cx, int cy, int r, const Color& c) {
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) put(img, y, x, c);
}

struct PixelRect {  // inclusive pixel bounds
  int x0, y0, x1, y1;

  bool intersects(const PixelRect& o, int margin) const {
    return !(x1 + margin < o.x0 || o.x1 + margin < x0 ||
             y1 + margin < o.y0 || o.y1 + margin < y0);
  }
};

GroundTruthBox to_gt(const PixelRect& r, int class_id, int image_size) {
  GroundTruthBox gt;
  gt.class_id = class_id;
  const double s = static_cast<double>(image_size);
  gt.box.cx = (r.x0 + r.x1 + 1) / 2.0 / s;
  gt.box.cy = (r.y0 + r.y1 + 1) / 2.0 / s;
  gt.box.w = (r.x1 - r.x0 + 1) / s;
  gt.box.h = (r.y1 - r.y0 + 1) / s;
  return gt;
}

int sample_class(Rng& rng, const std::array<double, 6>& mix) {
  double total = 0.0;
  for (double w : mix) {
    check(w >= 0.0, "synth_pcb: negative class mix weight");
    total += w;
  }
  check(total > 0.0, "synth_pcb: class mix sums to zero");
  double u = rng.uniform() * total;
  for (int c = 0; c < 6; ++c) {
    u -= mix[c];
    if (u < 0.0) return c;
  }
  return 5;
}

}  // namespace

DatasetRecord synth_pcb(uint64_t seed, const SynthConfig& config) {
  check(config.image_size >= 32, "synth_pcb: image_size must be >= 32");
  check(config.min_defects >= 0 && config.max_defects >= config.min_defects,
        "synth_pcb: invalid defect count range");

  const int sz = config.image_size;
  const double u = sz / 64.0;  // motif scale unit
  const int tw = std::max(2, static_cast<int>(std::lround(2 * u)));
  const int pad_r = std::max(2, static_cast<int>(std::lround(3.5 * u)));
  const int hole_r = std::max(1, static_cast<int>(std::lround(1.5 * u)));

  Rng rng(seed);
  DatasetRecord record;
  record.id = "synth_" + std::to_string(seed);
  record.source = RecordSource::kSynthetic;
  record.image.height = sz;
  record.image.width = sz;
  record.image.rgb.resize(static_cast<size_t>(sz) * sz * 3);
  fill_rect(record.image, 0, 0, sz - 1, sz - 1, kBoard);

  // three vertical and two horizontal traces, jittered
  std::array<int, 3> vxs{};
  for (int k = 0; k < 3; ++k) {
    const int base = sz * (2 * k + 1) / 6;
    vxs[k] = base + static_cast<int>(rng.uniform_int(-sz / 20, sz / 20));
    fill_rect(record.image, vxs[k], 0, vxs[k] + tw - 1, sz - 1, kCopper);
  }
  std::array<int, 2> hys{};
  for (int k = 0; k < 2; ++k) {
    const int base = sz * (k + 1) / 3;
    hys[k] = base + static_cast<int>(rng.uniform_int(-sz / 20, sz / 20));
    fill_rect(record.image, 0, hys[k], sz - 1, hys[k] + tw - 1, kCopper);
  }
  // pads with drilled holes on alternating intersections
  std::vector<std::pair<int, int>> pad_centers;
  for (int kv = 0; kv < 3; ++kv)
    for (int kh = 0; kh < 2; ++kh) {
      if ((kv + kh) % 2 != 0) continue;
      const int cx = vxs[kv] + tw / 2, cy = hys[kh] + tw / 2;
      fill_disc(record.image, cx, cy, pad_r, kPad);
      fill_disc(record.image, cx, cy, hole_r, kHole);
      pad_centers.emplace_back(cx, cy);
    }

  const int count = static_cast<int>(
      rng.uniform_int(config.min_defects, config.max_defects));
  const int margin = std::max(1, static_cast<int>(std::lround(1.5 * u)));

  std::vector<PixelRect> placed;
  // keep defects away from the pads so motifs stay unambiguous
  for (const auto& [cx, cy] : pad_centers)
    placed.push_back(PixelRect{cx - pad_r, cy - pad_r, cx + pad_r, cy + pad_r});
  const size_t reserved = placed.size();

  auto try_place = [&](const PixelRect& r) {
    if (r.x0 < 1 || r.y0 < 1 || r.x1 > sz - 2 || r.y1 > sz - 2) return false;
    for (const PixelRect& p : placed)
      if (r.intersects(p, margin)) return false;
    placed.push_back(r);
    return true;
  };

  for (int d = 0; d < count; ++d) {
    const int class_id = sample_class(rng, config.class_mix);
    bool done = false;
    for (int attempt = 0; attempt < 200 && !done; ++attempt) {
      switch (class_id) {
        case 0: {  // missing hole: a pad without its drilled center
          const int vx = vxs[rng.uniform_int(0, 2)];
          const int cy = static_cast<int>(rng.uniform_int(pad_r + 1, sz - pad_r - 2));
          const int cx = vx + tw / 2;
          const PixelRect r{cx - pad_r, cy - pad_r, cx + pad_r, cy + pad_r};
          if (!try_place(r)) break;
          fill_disc(record.image, cx, cy, pad_r, kPad);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
        case 1: {  // mouse bite: semicircular notch on a trace edge
          const int br = std::max(2, static_cast<int>(std::lround(2.5 * u)));
          const int vx = vxs[rng.uniform_int(0, 2)];
          const int cy = static_cast<int>(rng.uniform_int(br + 1, sz - br - 2));
          const bool left = rng.uniform() < 0.5;
          const int cx = left ? vx : vx + tw - 1;
          const PixelRect r{cx - br, cy - br, cx + br, cy + br};
          if (!try_place(r)) break;
          fill_disc(record.image, cx, cy, br, kBoard);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
        case 2: {  // open circuit: gap cut across a trace
          const int gl = std::max(3, static_cast<int>(std::lround(4 * u)));
          const int vx = vxs[rng.uniform_int(0, 2)];
          const int gy = static_cast<int>(rng.uniform_int(2, sz - gl - 2));
          const PixelRect r{vx, gy, vx + tw - 1, gy + gl - 1};
          if (!try_place(r)) break;
          fill_rect(record.image, r.x0, r.y0, r.x1, r.y1, kBoard);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
        case 3: {  // short: copper bridge between two adjacent traces
          const int st = std::max(2, static_cast<int>(std::lround(2 * u)));
          const int lane = static_cast<int>(rng.uniform_int(0, 1));
          const int xa = vxs[lane] + tw, xb = vxs[lane + 1] - 1;
          if (xb <= xa) break;
          const int by = static_cast<int>(rng.uniform_int(2, sz - st - 2));
          const PixelRect r{xa, by, xb, by + st - 1};
          if (!try_place(r)) break;
          fill_rect(record.image, r.x0, r.y0, r.x1, r.y1, kCopper);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
        case 4: {  // spur: protrusion sticking out of a trace
          const int sl = std::max(3, static_cast<int>(std::lround(3 * u)));
          const int st = std::max(2, static_cast<int>(std::lround(2 * u)));
          const int vx = vxs[rng.uniform_int(0, 2)];
          const int sy = static_cast<int>(rng.uniform_int(2, sz - st - 2));
          const bool left = rng.uniform() < 0.5;
          const PixelRect r = left
                                  ? PixelRect{vx - sl, sy, vx - 1, sy + st - 1}
                                  : PixelRect{vx + tw, sy, vx + tw + sl - 1,
                                              sy + st - 1};
          if (!try_place(r)) break;
          fill_rect(record.image, r.x0, r.y0, r.x1, r.y1, kCopper);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
        case 5: {  // spurious copper: isolated blob on the substrate
          const int sr = std::max(2, static_cast<int>(std::lround(3 * u)));
          const int cx = static_cast<int>(rng.uniform_int(sr + 1, sz - sr - 2));
          const int cy = static_cast<int>(rng.uniform_int(sr + 1, sz - sr - 2));
          const PixelRect r{cx - sr, cy - sr, cx + sr, cy + sr};
          // must not touch existing copper
          bool clean = true;
          for (int vx : vxs)
            if (cx + sr >= vx - margin && cx - sr <= vx + tw - 1 + margin)
              clean = false;
          for (int hy : hys)
            if (cy + sr >= hy - margin && cy - sr <= hy + tw - 1 + margin)
              clean = false;
          if (!clean || !try_place(r)) break;
          fill_disc(record.image, cx, cy, sr, kCopper);
          record.boxes.push_back(to_gt(r, class_id, sz));
          done = true;
          break;
        }
      }
    }
    check(done, "synth_pcb: defect count exceeds the placeable area (placed " +
                    std::to_string(placed.size() - reserved) + " of " +
                    std::to_string(count) + ")");
  }
  return record;
}

std::vector<DatasetRecord> synth_dataset(uint64_t seed, int count,
                                         const SynthConfig& config) {
  check(count >= 0, "synth_dataset: negative count");
  std::vector<DatasetRecord> records;
  records.reserve(count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    DatasetRecord r = synth_pcb(rng.next_u64(), config);
    r.id = "synth_" + std::to_string(seed) + "_" + std::to_string(i);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace pcbdet
