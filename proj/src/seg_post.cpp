#include "cyto/seg_post.hpp"

#include <algorithm>
#include <string>

#include "cyto/error.hpp"

namespace cyto {

BinaryMask::BinaryMask(int w, int h, bool fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw DimensionError("mask extents must be positive");
  bits.assign(static_cast<size_t>(w) * h, fill ? 1 : 0);
}

size_t BinaryMask::count() const { return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t{1})); }

BinaryMask binarize(std::span<const float> probs, int width, int height, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ValidationError("binarize threshold must lie in (0,1)");
  BinaryMask m(width, height);
  if (probs.size() != m.bits.size()) throw DimensionError("probability grid does not match mask extents");
  for (size_t i = 0; i < probs.size(); ++i) m.bits[i] = probs[i] >= threshold ? 1 : 0;
  return m;
}

BinaryMask mask_from_image(const Image8& image) {
  BinaryMask m(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) m.set(x, y, image.at(x, y, 0) != 0);
  }
  return m;
}

Image8 mask_to_image(const BinaryMask& mask) {
  Image8 img(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

namespace {

BoundingBox pad_and_clamp(BoundingBox b, int padding, int w, int h) {
  b.x_min = std::max(0, b.x_min - padding);
  b.y_min = std::max(0, b.y_min - padding);
  b.x_max = std::min(w - 1, b.x_max + padding);
  b.y_max = std::min(h - 1, b.y_max + padding);
  return b;
}

}  // namespace

std::optional<BoundingBox> extract_bbox(const BinaryMask& mask, int padding) {
  if (padding < 0) throw ValidationError("bounding-box padding must be >= 0");
  BoundingBox b{mask.width, mask.height, -1, -1};
  bool any = false;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      any = true;
      b.x_min = std::min(b.x_min, x);
      b.x_max = std::max(b.x_max, x);
      b.y_min = std::min(b.y_min, y);
      b.y_max = std::max(b.y_max, y);
    }
  }
  if (!any) return std::nullopt;
  return pad_and_clamp(b, padding, mask.width, mask.height);
}

std::vector<BoundingBox> extract_component_bboxes(const BinaryMask& mask, int padding) {
  if (padding < 0) throw ValidationError("bounding-box padding must be >= 0");
  std::vector<uint8_t> seen(mask.bits.size(), 0);
  std::vector<BoundingBox> boxes;
  std::vector<std::array<int, 2>> stack;
  for (int y0 = 0; y0 < mask.height; ++y0) {
    for (int x0 = 0; x0 < mask.width; ++x0) {
      const size_t i0 = static_cast<size_t>(y0) * mask.width + x0;
      if (!mask.bits[i0] || seen[i0]) continue;
      BoundingBox b{x0, y0, x0, y0};
      seen[i0] = 1;
      stack.push_back({x0, y0});
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        b.x_min = std::min(b.x_min, x);
        b.x_max = std::max(b.x_max, x);
        b.y_min = std::min(b.y_min, y);
        b.y_max = std::max(b.y_max, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
            const size_t ni = static_cast<size_t>(ny) * mask.width + nx;
            if (mask.bits[ni] && !seen[ni]) {
              seen[ni] = 1;
              stack.push_back({nx, ny});
            }
          }
        }
      }
      boxes.push_back(pad_and_clamp(b, padding, mask.width, mask.height));
    }
  }
  return boxes;
}

namespace {

std::vector<int> even_anchors(int extent, int side, int count) {
  std::vector<int> out;
  const long long span = extent - side;
  for (int i = 0; i < count; ++i) {
    int v = 0;
    if (count > 1) {
      const long long num = static_cast<long long>(i) * span;
      const long long den = count - 1;
      v = static_cast<int>((2 * num + den) / (2 * den));
    }
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

}  // namespace

PatchGrid make_patch_grid(int image_w, int image_h, int patch_side, int cols, int rows) {
  if (cols < 1 || rows < 1) throw ValidationError("patch grid needs at least one column and row");
  if (patch_side < 1 || patch_side > std::min(image_w, image_h)) {
    throw ValidationError("patch side " + std::to_string(patch_side) + " does not fit in " + std::to_string(image_w) +
                          "x" + std::to_string(image_h));
  }
  PatchGrid grid;
  grid.patch_side = patch_side;
  const std::vector<int> xs = even_anchors(image_w, patch_side, cols);
  const std::vector<int> ys = even_anchors(image_h, patch_side, rows);
  for (int y : ys) {
    for (int x : xs) grid.anchors.push_back({x, y});
  }
  return grid;
}

std::vector<size_t> filter_empty(std::span<const BinaryMask> masks) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < masks.size(); ++i) {
    if (std::find(masks[i].bits.begin(), masks[i].bits.end(), uint8_t{1}) != masks[i].bits.end()) keep.push_back(i);
  }
  return keep;
}

Image8 render_bbox(const Image8& image, const BoundingBox& box, std::array<uint8_t, 3> color, int thickness) {
  if (thickness < 1) throw ValidationError("box thickness must be >= 1");
  if (box.x_min < 0 || box.y_min < 0 || box.x_max >= image.width || box.y_max >= image.height ||
      box.x_min > box.x_max || box.y_min > box.y_max) {
    throw ValidationError("bounding box lies outside the image");
  }
  Image8 out = image;
  for (int y = box.y_min; y <= box.y_max; ++y) {
    for (int x = box.x_min; x <= box.x_max; ++x) {
      const bool edge = x - box.x_min < thickness || box.x_max - x < thickness || y - box.y_min < thickness ||
                        box.y_max - y < thickness;
      if (!edge) continue;
      for (int c = 0; c < out.channels; ++c) out.at(x, y, c) = color[std::min(c, 2)];
    }
  }
  return out;
}

Image8 crop(const Image8& image, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > image.width || y + h > image.height) {
    throw ValidationError("crop window outside image");
  }
  Image8 out(w, h, image.channels);
  for (int r = 0; r < h; ++r) {
    const auto* src = image.pixels.data() + (static_cast<size_t>(y + r) * image.width + x) * image.channels;
    std::copy(src, src + static_cast<size_t>(w) * image.channels,
              out.pixels.begin() + static_cast<std::ptrdiff_t>(static_cast<size_t>(r) * w * image.channels));
  }
  return out;
}

BinaryMask crop(const BinaryMask& mask, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > mask.width || y + h > mask.height) {
    throw ValidationError("crop window outside mask");
  }
  BinaryMask out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.set(c, r, mask.at(x + c, y + r));
  }
  return out;
}

}  // namespace cyto
