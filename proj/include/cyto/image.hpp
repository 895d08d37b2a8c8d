#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cyto {

/// 8-bit image, interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c, uint8_t fill = 0);

  uint8_t& at(int x, int y, int c = 0) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  uint8_t at(int x, int y, int c = 0) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  bool operator==(const Image8&) const = default;
};

/// Float image, channel-major (CHW), values nominally in [0,1].
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, int c, float fill = 0.0f);

  float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
};

/// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PGM/PPM.
/// Alpha is dropped; palette images expand to RGB.
Image8 read_image(const std::filesystem::path& path);

/// Writes PNG or, by extension (.pgm/.ppm), binary PNM. channels must be 1 or 3.
void write_image(const std::filesystem::path& path, const Image8& image);

/// Decoded image as 3-channel CHW floats, byte / 255. Gray is replicated.
FloatImage decode_image(const std::filesystem::path& path);

FloatImage to_float_rgb(const Image8& image);
/// Rounds to nearest byte after clamping to [0,1].
Image8 to_image8(const FloatImage& image);

/// Bilinear resampling with half-pixel centres: source coordinate
/// (dst + 0.5) * in/out - 0.5, clamped to the valid range.
FloatImage resize_bilinear(const FloatImage& image, int out_w, int out_h);

}  // namespace cyto
