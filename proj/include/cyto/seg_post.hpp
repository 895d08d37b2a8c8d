#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cyto/image.hpp"

namespace cyto {

/// Row-major binary grid; true marks a cell (white) pixel.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false);

  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool on = true) { bits[static_cast<size_t>(y) * width + x] = on ? 1 : 0; }
  size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

/// Inclusive pixel box; x is the column, y the row.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  bool contains(const BoundingBox& other) const {
    return x_min <= other.x_min && y_min <= other.y_min && x_max >= other.x_max && y_max >= other.y_max;
  }
  bool operator==(const BoundingBox&) const = default;
};

struct PatchGrid {
  int patch_side = 0;
  std::vector<std::array<int, 2>> anchors;  // (x, y) top-left corners
};

inline constexpr int kDefaultBoxPadding = 10;

/// bit = (p >= threshold). threshold must lie in (0,1).
BinaryMask binarize(std::span<const float> probs, int width, int height, float threshold = 0.5f);

/// Gray image -> mask, nonzero is white.
BinaryMask mask_from_image(const Image8& image);
/// 0 / 255 single-channel image.
Image8 mask_to_image(const BinaryMask& mask);

/// Global min/max box of all white pixels grown by `padding` on each side and
/// clamped to the image. Empty mask -> nullopt.
std::optional<BoundingBox> extract_bbox(const BinaryMask& mask, int padding);

/// One padded, clamped box per 8-connected white component, ordered by the
/// component's first pixel in row-major scan.
std::vector<BoundingBox> extract_component_bboxes(const BinaryMask& mask, int padding);

/// cols x rows evenly spaced anchors, x_i = round(i (w - side) / (cols - 1)),
/// half rounded up; last row/column flush with the image edge. Coincident
/// anchors (possible when the image barely exceeds the patch) are emitted once.
PatchGrid make_patch_grid(int image_w, int image_h, int patch_side = 512, int cols = 5, int rows = 4);

/// Indices of masks with at least one white pixel.
std::vector<size_t> filter_empty(std::span<const BinaryMask> masks);

/// Recolours the `thickness`-pixel band just inside the box perimeter.
Image8 render_bbox(const Image8& image, const BoundingBox& box, std::array<uint8_t, 3> color, int thickness = 2);

/// Crop of `image` starting at (x, y).
Image8 crop(const Image8& image, int x, int y, int w, int h);
BinaryMask crop(const BinaryMask& mask, int x, int y, int w, int h);

}  // namespace cyto
