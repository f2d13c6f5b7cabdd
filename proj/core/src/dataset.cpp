#include "pcbdet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "pcbdet/common.hpp"

namespace fs = std::filesystem;

namespace pcbdet {

int class_id_from_name(const std::string& name) {
  std::string key;
  key.reserve(name.size());
  for (char c : name) {
    if (c == ' ' || c == '-') c = '_';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (size_t i = 0; i < kPcbClassNames.size(); ++i)
    if (kPcbClassNames[i] == key) return static_cast<int>(i);
  throw Error("unknown defect class name '" + name + "'");
}

Tensor normalize_image(const std::vector<uint8_t>& pixels, int height,
                       int width) {
  check(height > 0 && width > 0, "normalize_image: empty dimensions");
  check(pixels.size() == static_cast<size_t>(height) * width * 3,
        "normalize_image: pixel buffer does not match H*W*3");
  std::vector<double> out(pixels.size());
  const int64_t hw = static_cast<int64_t>(height) * width;
  for (int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c)
      out[c * hw + i] = static_cast<double>(pixels[i * 3 + c]) / 255.0;
  return Tensor::from_data({3, height, width}, std::move(out), false);
}

Tensor to_chw_tensor(const ImageBuffer& image) {
  check(image.height > 0 && image.width > 0, "to_chw_tensor: empty image");
  check(image.rgb.size() ==
            static_cast<size_t>(image.height) * image.width * 3,
        "to_chw_tensor: buffer does not match H*W*3");
  std::vector<double> out(image.rgb.size());
  const int64_t hw = static_cast<int64_t>(image.height) * image.width;
  for (int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) out[c * hw + i] = image.rgb[i * 3 + c];
  return Tensor::from_data({3, image.height, image.width}, std::move(out),
                           false);
}

Tensor batch_tensor(const std::vector<const DatasetRecord*>& records) {
  check(!records.empty(), "batch_tensor: no records");
  const int h = records[0]->image.height, w = records[0]->image.width;
  const int64_t chw = 3LL * h * w;
  std::vector<double> out(records.size() * chw);
  for (size_t n = 0; n < records.size(); ++n) {
    check(records[n]->image.height == h && records[n]->image.width == w,
          "batch_tensor: mixed image sizes in one batch");
    const Tensor t = to_chw_tensor(records[n]->image);
    std::copy(t.values().begin(), t.values().end(), out.begin() + n * chw);
  }
  return Tensor::from_data({static_cast<int64_t>(records.size()), 3, h, w},
                           std::move(out), false);
}

namespace {

void clamp_pixels(ImageBuffer& image) {
  for (double& v : image.rgb) v = std::clamp(v, 0.0, 1.0);
}

// Clips a box to the unit square; false when nothing remains.
bool clip_box(Box& b) {
  const double x1 = std::max(b.x1(), 0.0), y1 = std::max(b.y1(), 0.0);
  const double x2 = std::min(b.x2(), 1.0), y2 = std::min(b.y2(), 1.0);
  if (x2 <= x1 || y2 <= y1) return false;
  b = Box::from_corners(x1, y1, x2, y2);
  return true;
}

void apply_hflip(DatasetRecord& r) {
  ImageBuffer& img = r.image;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < 3; ++c)
        std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
  for (GroundTruthBox& b : r.boxes) b.box.cx = 1.0 - b.box.cx;
}

void apply_vflip(DatasetRecord& r) {
  ImageBuffer& img = r.image;
  for (int y = 0; y < img.height / 2; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        std::swap(img.at(y, x, c), img.at(img.height - 1 - y, x, c));
  for (GroundTruthBox& b : r.boxes) b.box.cy = 1.0 - b.box.cy;
}

void apply_rotate90(DatasetRecord& r) {
  // clockwise: input (row, col) -> output (col, H-1-row)
  ImageBuffer out;
  out.height = r.image.width;
  out.width = r.image.height;
  out.rgb.assign(r.image.rgb.size(), 0.0);
  for (int y = 0; y < r.image.height; ++y)
    for (int x = 0; x < r.image.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, r.image.height - 1 - y, c) = r.image.at(y, x, c);
  r.image = std::move(out);
  for (GroundTruthBox& b : r.boxes) {
    const double cx = b.box.cx, cy = b.box.cy;
    b.box.cx = 1.0 - cy;
    b.box.cy = cx;
    std::swap(b.box.w, b.box.h);
  }
}

void apply_scale_jitter(DatasetRecord& r, double factor,
                        std::vector<GroundTruthBox>& dropped) {
  ImageBuffer out;
  out.height = r.image.height;
  out.width = r.image.width;
  out.rgb.assign(r.image.rgb.size(), 0.0);
  const double cy0 = (r.image.height - 1) / 2.0;
  const double cx0 = (r.image.width - 1) / 2.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const int sy = static_cast<int>(std::lround((y - cy0) / factor + cy0));
      const int sx = static_cast<int>(std::lround((x - cx0) / factor + cx0));
      if (sy < 0 || sy >= r.image.height || sx < 0 || sx >= r.image.width)
        continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = r.image.at(sy, sx, c);
    }
  r.image = std::move(out);

  std::vector<GroundTruthBox> kept;
  for (GroundTruthBox b : r.boxes) {
    b.box.cx = (b.box.cx - 0.5) * factor + 0.5;
    b.box.cy = (b.box.cy - 0.5) * factor + 0.5;
    b.box.w *= factor;
    b.box.h *= factor;
    if (clip_box(b.box)) {
      kept.push_back(b);
    } else {
      dropped.push_back(b);
    }
  }
  r.boxes = std::move(kept);
}

}  // namespace

DatasetRecord augment(const DatasetRecord& record, const AugmentSpec& spec) {
  DatasetRecord out = record;
  out.source = RecordSource::kAugmented;
  Rng rng(spec.seed);
  std::vector<GroundTruthBox> dropped;
  for (const AugmentStep& step : spec.ops) {
    switch (step.op) {
      case AugmentOp::kHflip:
        apply_hflip(out);
        break;
      case AugmentOp::kVflip:
        apply_vflip(out);
        break;
      case AugmentOp::kRotate90:
        apply_rotate90(out);
        break;
      case AugmentOp::kScaleJitter: {
        check(step.lo > 0.0 && step.hi >= step.lo,
              "augment: invalid scale_jitter range");
        apply_scale_jitter(out, rng.uniform(step.lo, step.hi), dropped);
        break;
      }
      case AugmentOp::kBrightness: {
        check(step.lo >= 0.0 && step.hi >= step.lo,
              "augment: invalid brightness range");
        const double f = rng.uniform(step.lo, step.hi);
        for (double& v : out.image.rgb) v *= f;
        clamp_pixels(out.image);
        break;
      }
      case AugmentOp::kGaussianNoise: {
        check(step.sigma >= 0.0, "augment: negative noise sigma");
        for (double& v : out.image.rgb) v += rng.normal(0.0, step.sigma);
        clamp_pixels(out.image);
        break;
      }
    }
  }
  if (!dropped.empty())
    std::cerr << "warning: augment dropped " << dropped.size()
              << " box(es) pushed outside the image\n";
  return out;
}

SplitResult split_dataset(const std::vector<DatasetRecord>& records,
                          std::array<double, 3> ratios, uint64_t seed) {
  check(!records.empty(), "split_dataset: empty input");
  const double total = ratios[0] + ratios[1] + ratios[2];
  check(std::abs(total - 1.0) < 1e-9, "split_dataset: ratios must sum to 1");
  for (double r : ratios) check(r >= 0.0, "split_dataset: negative ratio");

  Rng rng(seed);
  auto shuffled_indices = [&rng](size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i)
      std::swap(idx[i - 1],
                idx[static_cast<size_t>(rng.uniform_int(0, i - 1))]);
    return idx;
  };
  auto part_sizes = [&ratios](size_t n) {
    std::array<size_t, 3> sizes{};
    sizes[0] = static_cast<size_t>(std::llround(n * ratios[0]));
    sizes[1] = static_cast<size_t>(std::llround(n * ratios[1]));
    sizes[0] = std::min(sizes[0], n);
    sizes[1] = std::min(sizes[1], n - sizes[0]);
    sizes[2] = n - sizes[0] - sizes[1];
    return sizes;
  };

  // Strata keyed on the first box class (-1 for empty records).
  std::map<int, std::vector<size_t>> strata;
  for (size_t i = 0; i < records.size(); ++i)
    strata[records[i].boxes.empty() ? -1 : records[i].boxes[0].class_id]
        .push_back(i);

  bool stratified = strata.size() > 1;
  for (const auto& [cls, members] : strata) {
    const auto sizes = part_sizes(members.size());
    for (int p = 0; p < 3; ++p)
      if (ratios[p] > 0.0 && sizes[p] == 0) stratified = false;
  }

  SplitResult result;
  auto emit = [&](const std::vector<size_t>& members) {
    std::vector<size_t> order = shuffled_indices(members.size());
    const auto sizes = part_sizes(members.size());
    for (size_t k = 0; k < members.size(); ++k) {
      const DatasetRecord& r = records[members[order[k]]];
      if (k < sizes[0])
        result.train.push_back(r);
      else if (k < sizes[0] + sizes[1])
        result.val.push_back(r);
      else
        result.test.push_back(r);
    }
  };

  if (stratified) {
    for (const auto& [cls, members] : strata) emit(members);
  } else {
    std::vector<size_t> all(records.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    emit(all);
  }
  return result;
}

std::vector<DatasetRecord> load_dataset_dir(const std::string& root) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path ann_dir = fs::path(root) / "annotations";
  check(fs::is_directory(images_dir) && fs::is_directory(ann_dir),
        "dataset: '" + root + "' must contain images/ and annotations/");

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(ann_dir))
    if (entry.path().extension() == ".xml")
      stems.push_back(entry.path().stem().string());
  std::sort(stems.begin(), stems.end());
  check(!stems.empty(), "dataset: no annotation files under " + root);

  std::vector<DatasetRecord> records;
  for (const std::string& stem : stems) {
    fs::path image_path;
    for (const char* ext : {".png", ".jpg", ".jpeg", ".bmp"}) {
      const fs::path candidate = images_dir / (stem + ext);
      if (fs::exists(candidate)) {
        image_path = candidate;
        break;
      }
    }
    check(!image_path.empty(), "dataset: no image for annotation '" + stem + "'");

    std::ifstream xml(ann_dir / (stem + ".xml"));
    std::string text((std::istreambuf_iterator<char>(xml)),
                     std::istreambuf_iterator<char>());
    const ParsedAnnotation ann = parse_annotation(text);

    DatasetRecord record;
    record.id = stem;
    record.image = load_image_file(image_path.string());
    record.boxes = ann.boxes;
    record.source = RecordSource::kReal;
    records.push_back(std::move(record));
  }
  return records;
}

void export_dataset(const std::vector<DatasetRecord>& records,
                    const std::string& root) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path ann_dir = fs::path(root) / "annotations";
  fs::create_directories(images_dir);
  fs::create_directories(ann_dir);
  for (const DatasetRecord& record : records) {
    check(!record.id.empty(), "export_dataset: record with empty id");
    save_image_file(record.image, (images_dir / (record.id + ".png")).string());
    std::ofstream out(ann_dir / (record.id + ".xml"));
    check(out.is_open(), "export_dataset: cannot write annotation for '" +
                             record.id + "'");
    out << write_annotation(record);
  }
}

}  // namespace pcbdet
