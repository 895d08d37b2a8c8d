#include "cyto/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cyto/error.hpp"
#include "cyto/rng.hpp"

namespace cyto {

std::array<ClassKnobs, kNumClasses> default_class_knobs() {
  std::array<ClassKnobs, kNumClasses> k;
  // Superficial-Intermediate: large flat cell, small dense nucleus.
  k[0] = {{0.36, 0.44}, {0.10, 0.16}, {0.15, 0.35}, {0.02, 0.04}, {0.95f, 0.70f, 0.75f}, {0.20f, 0.15f, 0.35f}, false};
  // Parabasal: small round cell, big nucleus.
  k[1] = {{0.18, 0.24}, {0.38, 0.48}, {0.00, 0.12}, {0.02, 0.04}, {0.55f, 0.80f, 0.85f}, {0.25f, 0.20f, 0.50f}, false};
  // Koilocytotic: perinuclear halo.
  k[2] = {{0.28, 0.34}, {0.20, 0.28}, {0.20, 0.40}, {0.04, 0.07}, {0.80f, 0.75f, 0.55f}, {0.30f, 0.20f, 0.30f}, true};
  // Dyskaryotic: enlarged hyperchromatic nucleus, irregular texture.
  k[3] = {{0.22, 0.30}, {0.50, 0.62}, {0.30, 0.50}, {0.08, 0.12}, {0.85f, 0.55f, 0.45f}, {0.12f, 0.08f, 0.20f}, false};
  // Metaplastic: rounded, dense dark cytoplasm.
  k[4] = {{0.24, 0.30}, {0.26, 0.34}, {0.05, 0.20}, {0.04, 0.06}, {0.45f, 0.55f, 0.70f}, {0.20f, 0.15f, 0.40f}, false};
  return k;
}

void validate(const SyntheticCellConfig& cfg) {
  if (cfg.classes != kNumClasses) throw ValidationError("synthetic data has exactly 5 classes");
  if (cfg.per_class < 1) throw ValidationError("per_class must be >= 1");
  if (cfg.image_side < 16) throw ValidationError("image side must be >= 16");
  auto check = [](const Range& r, double lo, double hi, const char* what, int c) {
    if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
      throw ValidationError(std::string("class ") + std::to_string(c) + " knob '" + what + "' range invalid");
    }
  };
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassKnobs& k = cfg.knobs[c];
    check(k.cell_size, 0.02, 0.5, "cell_size", c);
    check(k.nc_ratio, 0.0, 0.9, "nc_ratio", c);
    check(k.eccentricity, 0.0, 0.8, "eccentricity", c);
    check(k.texture, 0.0, 0.5, "texture", c);
    if (k.cell_size.lo * cfg.image_side < 3.0) throw ValidationError("synthetic cells too small for the image side");
  }
}

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void render_cell(const ClassKnobs& k, int side, Rng& rng, Image8& image, BinaryMask& mask) {
  const double major = k.cell_size.lo + (k.cell_size.hi - k.cell_size.lo) * rng.uniform();
  const double ecc = rng.uniform(k.eccentricity.lo, k.eccentricity.hi);
  const double nc = rng.uniform(k.nc_ratio.lo, k.nc_ratio.hi);
  const double tex = rng.uniform(k.texture.lo, k.texture.hi);
  const double a = major * side;
  const double b = a * (1.0 - ecc);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double jitter = 0.06 * side;
  const double cx = side / 2.0 + rng.uniform(-jitter, jitter);
  const double cy = side / 2.0 + rng.uniform(-jitter, jitter);
  const double nr = std::max(1.0, nc * b);
  // nucleus sits off-centre by up to a quarter of the free space
  const double free_r = std::max(0.0, b - nr);
  const double nphi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double noff = rng.uniform(0.0, 0.25) * free_r;
  const double nx = cx + noff * std::cos(nphi);
  const double ny = cy + noff * std::sin(nphi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double halo_r = nr * 1.6;

  const std::array<float, 3> bg = {0.88f, 0.86f, 0.90f};
  const double tint = rng.uniform(-0.04, 0.04);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double px = x + 0.5 - cx, py = y + 0.5 - cy;
      const double u = px * ct + py * st;
      const double v = -px * st + py * ct;
      const bool inside = (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      const double dn = std::hypot(x + 0.5 - nx, y + 0.5 - ny);
      std::array<double, 3> rgb{};
      if (!inside) {
        const double n = rng.normal() * 0.02;
        for (int c = 0; c < 3; ++c) rgb[c] = bg[c] + n;
      } else if (dn <= nr) {
        const double n = rng.normal() * tex * 0.5;
        for (int c = 0; c < 3; ++c) rgb[c] = k.nucleus_rgb[c] + n;
      } else {
        const double n = rng.normal() * tex;
        const bool halo = k.perinuclear_halo && dn <= halo_r;
        for (int c = 0; c < 3; ++c) {
          const double base = halo ? 0.5 * (k.cytoplasm_rgb[c] + 1.0) : k.cytoplasm_rgb[c];
          rgb[c] = base + tint + n;
        }
      }
      mask.set(x, y, inside);
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = static_cast<uint8_t>(std::lround(clamp01(rgb[c]) * 255.0f));
    }
  }
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticCellConfig& cfg) {
  validate(cfg);
  Rng master(cfg.seed);
  SyntheticDataset out;
  const int total = cfg.per_class * cfg.classes;
  for (int i = 0; i < total; ++i) {
    const int label = i % cfg.classes;
    Rng rng = master.fork();
    Image8 img(cfg.image_side, cfg.image_side, 3);
    BinaryMask mask(cfg.image_side, cfg.image_side);
    render_cell(cfg.knobs[label], cfg.image_side, rng, img, mask);
    out.images.push_back(std::move(img));
    out.masks.push_back(std::move(mask));
    out.labels.push_back(label);
  }
  return out;
}

Manifest write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  Manifest m;
  for (size_t i = 0; i < data.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%04zu.png", i);
    ManifestEntry e;
    e.image_path = std::string("images/") + name;
    e.mask_path = std::string("masks/") + name;
    e.label = data.labels[i];
    e.class_name = std::string(kClassNames[e.label]);
    write_image(dir / e.image_path, data.images[i]);
    write_image(dir / *e.mask_path, mask_to_image(data.masks[i]));
    m.entries.push_back(std::move(e));
  }
  save_manifest(dir / "manifest.json", m);
  return m;
}

std::vector<double> cell_statistics(const Image8& image, const BinaryMask& mask) {
  if (image.width != mask.width || image.height != mask.height || image.channels != 3) {
    throw DimensionError("cell statistics need an RGB image and a mask of equal size");
  }
  const double area_total = static_cast<double>(image.width) * image.height;
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  std::array<double, 3> mean{};
  double dark = 0.0, g_sum = 0.0, g_sq = 0.0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!mask.at(x, y)) continue;
      n += 1.0;
      sx += x;
      sy += y;
      sxx += static_cast<double>(x) * x;
      syy += static_cast<double>(y) * y;
      sxy += static_cast<double>(x) * y;
      double g = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = image.at(x, y, c) / 255.0;
        mean[c] += v;
        g += v / 3.0;
      }
      g_sum += g;
      g_sq += g * g;
      if (g < 0.4) dark += 1.0;
    }
  }
  if (n == 0.0) return std::vector<double>(8, 0.0);
  for (double& m : mean) m /= n;
  const double g_mean = g_sum / n;
  const double g_std = std::sqrt(std::max(0.0, g_sq / n - g_mean * g_mean));
  const double mx = sx / n, my = sy / n;
  const double cxx = sxx / n - mx * mx, cyy = syy / n - my * my, cxy = sxy / n - mx * my;
  const double tr = cxx + cyy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy));
  const double l1 = 0.5 * tr + disc, l2 = std::max(0.0, 0.5 * tr - disc);
  const double elongation = l1 > 0.0 ? 1.0 - std::sqrt(l2 / l1) : 0.0;
  return {n / area_total, mean[0], mean[1], mean[2], dark / n, g_std, elongation, std::sqrt(n / area_total)};
}

}  // namespace cyto
