#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcbdet/boxes.hpp"
#include "pcbdet/tensor.hpp"

namespace pcbdet {

// PKU-Market-PCB defect classes, id order fixed.
inline const std::array<std::string, 6> kPcbClassNames = {
    "missing_hole", "mouse_bite",  "open_circuit",
    "short",        "spur",        "spurious_copper"};

// Lowercases and unifies spaces/hyphens to underscores before lookup;
// throws on unknown names.
int class_id_from_name(const std::string& name);

// H×W×3 interleaved RGB in [0,1].
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;

  double& at(int y, int x, int c) { return rgb[(y * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(y * width + x) * 3 + c]; }
};

enum class RecordSource { kReal, kSynthetic, kAugmented };

struct DatasetRecord {
  std::string id;
  ImageBuffer image;
  std::vector<GroundTruthBox> boxes;
  RecordSource source = RecordSource::kSynthetic;
};

// ---- annotations (VOC-style XML: size + object{name, bndbox}) ----

struct ParsedAnnotation {
  int width = 0;
  int height = 0;
  std::string filename;
  std::vector<GroundTruthBox> boxes;  // normalized center form
};

// Throws on malformed documents, unknown class names and degenerate boxes.
ParsedAnnotation parse_annotation(const std::string& xml_text);
std::string write_annotation(const DatasetRecord& record);

// ---- pixels ----

// raw interleaved H×W×3 bytes -> 3×H×W tensor in [0,1]
Tensor normalize_image(const std::vector<uint8_t>& pixels, int height,
                       int width);
Tensor to_chw_tensor(const ImageBuffer& image);
// N×3×H×W batch from records (all same size).
Tensor batch_tensor(const std::vector<const DatasetRecord*>& records);

// ---- augmentation ----

enum class AugmentOp {
  kHflip,
  kVflip,
  kRotate90,  // clockwise
  kScaleJitter,
  kBrightness,
  kGaussianNoise
};

struct AugmentStep {
  AugmentOp op;
  double lo = 1.0;     // scale_jitter / brightness range
  double hi = 1.0;
  double sigma = 0.0;  // gaussian_noise
};

struct AugmentSpec {
  std::vector<AugmentStep> ops;
  uint64_t seed = 0;
};

// Pixels and boxes transformed consistently; photometric ops clamp to
// [0,1]; boxes pushed fully outside the image are dropped (with a warning
// on stderr). Deterministic under the spec seed.
DatasetRecord augment(const DatasetRecord& record, const AugmentSpec& spec);

// ---- synthetic PCB generator ----

struct SynthConfig {
  int image_size = 64;
  int min_defects = 1;
  int max_defects = 4;
  // Relative class sampling weights.
  std::array<double, 6> class_mix{1, 1, 1, 1, 1, 1};
};

// Seeded board render (traces + pads on a green substrate) with per-class
// defect motifs and exact bounding boxes. Bit-identical for equal seeds.
// Throws when the requested defect count exceeds the placeable sites.
DatasetRecord synth_pcb(uint64_t seed, const SynthConfig& config);
std::vector<DatasetRecord> synth_dataset(uint64_t seed, int count,
                                         const SynthConfig& config);

// ---- splits ----

struct SplitResult {
  std::vector<DatasetRecord> train, val, test;
};

// Seeded shuffle then contiguous split; falls back from per-class
// stratification (keyed on each record's first box class) to a plain split
// when a class cannot fill every part.
SplitResult split_dataset(const std::vector<DatasetRecord>& records,
                          std::array<double, 3> ratios, uint64_t seed);

// ---- directory layout: <root>/images/*.png + <root>/annotations/*.xml ----

std::vector<DatasetRecord> load_dataset_dir(const std::string& root);
void export_dataset(const std::vector<DatasetRecord>& records,
                    const std::string& root);

ImageBuffer load_image_file(const std::string& path);
void save_image_file(const ImageBuffer& image, const std::string& path);

// Burn boxes and class names into an image copy (detect --annotate).
void draw_detections(ImageBuffer& image, const std::vector<Detection>& dets,
                     const std::vector<std::string>& class_names);

}  // namespace pcbdet
