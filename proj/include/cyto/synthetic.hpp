#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cyto/classes.hpp"
#include "cyto/dataset.hpp"
#include "cyto/image.hpp"
#include "cyto/seg_post.hpp"

namespace cyto {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Generative knobs of one synthetic cell class.
struct ClassKnobs {
  Range cell_size;        // cytoplasm semi-major axis / image side
  Range nc_ratio;         // nucleus radius / cytoplasm semi-minor axis
  Range eccentricity;     // 1 - minor/major of the cytoplasm ellipse
  Range texture;          // amplitude of per-pixel cytoplasm noise
  std::array<float, 3> cytoplasm_rgb{};
  std::array<float, 3> nucleus_rgb{};
  bool perinuclear_halo = false;  // clear ring around the nucleus
};

std::array<ClassKnobs, kNumClasses> default_class_knobs();

struct SyntheticCellConfig {
  int classes = kNumClasses;
  int per_class = 100;
  int image_side = 128;
  uint64_t seed = 7;
  std::array<ClassKnobs, kNumClasses> knobs = default_class_knobs();
};

void validate(const SyntheticCellConfig& cfg);

/// Images interleave the classes: sample i has label i % classes.
struct SyntheticDataset {
  std::vector<Image8> images;  // RGB
  std::vector<BinaryMask> masks;
  std::vector<int> labels;
};

/// Textured ellipse cytoplasm with an inner nucleus on a noisy background.
/// The mask is exactly the cytoplasm ellipse support.
SyntheticDataset generate_synthetic(const SyntheticCellConfig& cfg);

/// Writes images/cell_NNNN.png and masks/cell_NNNN.png under `dir` and
/// returns the matching manifest (paths relative to `dir`).
Manifest write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

/// Hand-crafted per-image statistics (mask area, in-mask colour means, dark
/// fraction, texture, shape elongation) used to check class separability.
std::vector<double> cell_statistics(const Image8& image, const BinaryMask& mask);

}  // namespace cyto
