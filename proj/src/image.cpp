#include "cyto/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cyto/error.hpp"

namespace cyto {
namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::vector<uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Image8 read_png(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError("corrupt PNG " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(static_cast<int>(img.width), static_cast<int>(img.height), color ? 3 : 1);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("corrupt PNG " + path.string() + ": " + img.message);
  }
  return out;
}

// Binary PGM (P5) / PPM (P6), maxval 255.
Image8 read_pnm(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("corrupt PNM header in " + path.string());
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) throw FormatError("PNM dimension too large in " + path.string());
    }
    return v;
  };
  const int channels = bytes[1] == '5' ? 1 : 3;
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0) throw FormatError("PNM with empty extent: " + path.string());
  if (maxval != 255) throw FormatError("only 8-bit PNM (maxval 255) supported: " + path.string());
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("corrupt PNM header in " + path.string());
  ++pos;
  Image8 out(static_cast<int>(w), static_cast<int>(h), channels);
  if (bytes.size() - pos < out.pixels.size()) throw FormatError("truncated PNM " + path.string());
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), out.pixels.size(), out.pixels.begin());
  return out;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Image8::Image8(int w, int h, int c, uint8_t fill) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || c <= 0) throw DimensionError("image extents must be positive");
  pixels.assign(static_cast<size_t>(w) * h * c, fill);
}

FloatImage::FloatImage(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || c <= 0) throw DimensionError("image extents must be positive");
  data.assign(static_cast<size_t>(w) * h * c, fill);
}

Image8 read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const std::vector<uint8_t> bytes = slurp(path);
  static constexpr uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return read_png(path, bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return read_pnm(path, bytes);
  throw FormatError("unsupported image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("can only write gray or RGB images");
  if (image.pixels.size() != static_cast<size_t>(image.width) * image.height * image.channels) {
    throw DimensionError("image buffer does not match its extents");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    write_pnm(path, image);
    return;
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

FloatImage to_float_rgb(const Image8& image) {
  FloatImage out(image.width, image.height, 3);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 1 ? 0 : c;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(x, y, src_c) / 255.0f;
    }
  }
  return out;
}

FloatImage decode_image(const std::filesystem::path& path) { return to_float_rgb(read_image(path)); }

Image8 to_image8(const FloatImage& image) {
  Image8 out(image.width, image.height, image.channels);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        out.at(x, y, c) = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

FloatImage resize_bilinear(const FloatImage& image, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ValidationError("resize target must be at least 1x1");
  if (out_w == image.width && out_h == image.height) return image;
  FloatImage out(out_w, out_h, image.channels);

  struct Tap {
    int i0, i1;
    float frac;
  };
  auto taps = [](int in, int outn) {
    std::vector<Tap> t(static_cast<size_t>(outn));
    const double scale = static_cast<double>(in) / outn;
    for (int o = 0; o < outn; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, static_cast<float>(s - i0)};
    }
    return t;
  };
  const std::vector<Tap> tx = taps(image.width, out_w);
  const std::vector<Tap> ty = taps(image.height, out_h);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const Tap& vy = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& vx = tx[x];
        const float a = image.at(c, vy.i0, vx.i0), b = image.at(c, vy.i0, vx.i1);
        const float d = image.at(c, vy.i1, vx.i0), e = image.at(c, vy.i1, vx.i1);
        const float top = a + vx.frac * (b - a);
        const float bot = d + vx.frac * (e - d);
        out.at(c, y, x) = top + vy.frac * (bot - top);
      }
    }
  }
  return out;
}

}  // namespace cyto
