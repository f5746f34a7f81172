#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "canvoi/core/rng.hpp"
#include "canvoi/wsi/slide.hpp"

namespace canvoi::wsi {

struct Hsv {
  double h = 0.0;  // degrees [0, 360)
  double s = 0.0;
  double v = 0.0;
};

inline Rgb hsv_to_rgb(Hsv c) {
  const double h = std::fmod(std::fmod(c.h, 360.0) + 360.0, 360.0) / 60.0;
  const double chroma = c.v * c.s;
  const double x = chroma * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = chroma, g = x; break;
    case 1: r = x, g = chroma; break;
    case 2: g = chroma, b = x; break;
    case 3: g = x, b = chroma; break;
    case 4: r = x, b = chroma; break;
    default: r = chroma, b = x; break;
  }
  const double m = c.v - chroma;
  return {to_u8(255.0 * (r + m)), to_u8(255.0 * (g + m)), to_u8(255.0 * (b + m))};
}

inline Hsv rgb_to_hsv(Rgb c) {
  const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0 ? d / mx : 0.0;
  if (d == 0) return out;
  if (mx == r) out.h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  else if (mx == g) out.h = 60.0 * ((b - r) / d + 2.0);
  else out.h = 60.0 * ((r - g) / d + 4.0);
  return out;
}

// Ellipse in 0.5 um/px coordinates.
struct Ellipse {
  double cx = 0, cy = 0;
  double rx = 0, ry = 0;
  double angle = 0;  // radians

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

struct SyntheticSpec {
  int class_id = 0;
  int site = 0;
  int width = 1140;  // at 0.5 um/px; the raster is scaled when mpp differs
  int height = 1140;
  double mpp = 0.5;
  int blob_count = 4;
  double blob_radius_min = 140.0;
  double blob_radius_max = 320.0;
  double base_hue = 290.0;
  double class_hue_separation = 40.0;
  double site_hue_shift = 5.0;
  double saturation = 0.45;
  double value = 0.80;
  double texture_amplitude = 0.06;  // relative V noise
  double nuclei_density = 0.003;    // nuclei per tissue pixel
  double nuclei_radius = 4.0;
  double nuclei_darkening = 0.55;
  std::vector<Ellipse> blobs;  // explicit layout; random placement when empty

  double hue() const { return base_hue + class_id * class_hue_separation + site * site_hue_shift; }
};

// White canvas with textured elliptical tissue blobs. Hue depends on class and
// site; texture varies only V so the blob hue stays at spec.hue().
inline SlideRaster generate_synthetic_slide(const SyntheticSpec& spec, std::uint64_t seed,
                                            const std::string& slide_id = "") {
  if (spec.width <= 0 || spec.height <= 0 || !(spec.mpp > 0.0))
    throw ConfigError("synthetic slide needs positive size and mpp");
  if (spec.blobs.empty() && spec.blob_count > 0 &&
      !(spec.blob_radius_min > 0 && spec.blob_radius_max >= spec.blob_radius_min))
    throw ConfigError("synthetic blob radii must satisfy 0 < min <= max");
  Rng rng(seed, "synthetic_slide");

  std::vector<Ellipse> blobs = spec.blobs;
  if (blobs.empty())
    for (int i = 0; i < spec.blob_count; ++i) {
      Ellipse e;
      e.rx = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
      e.ry = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
      e.cx = rng.uniform(0.0, spec.width);
      e.cy = rng.uniform(0.0, spec.height);
      e.angle = rng.uniform(0.0, std::numbers::pi);
      blobs.push_back(e);
    }

  const double scale = kTargetMpp / spec.mpp;
  const int w = std::max(1, static_cast<int>(std::lround(spec.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(spec.height * scale)));
  SlideRaster slide;
  slide.raster = Raster(w, h);
  slide.mpp = spec.mpp;
  slide.slide_id = slide_id;
  slide.label = spec.class_id;

  std::vector<std::uint8_t> inside(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = (x + 0.5) / scale, py = (y + 0.5) / scale;
      for (const auto& e : blobs)
        if (e.contains(px, py)) {
          inside[static_cast<std::size_t>(y) * w + x] = 1;
          break;
        }
    }

  const double hue = spec.hue();
  std::vector<double> vmul(inside.size(), 1.0);
  for (std::size_t i = 0; i < inside.size(); ++i)
    if (inside[i]) vmul[i] = std::clamp(1.0 + spec.texture_amplitude * rng.normal(), 0.5, 1.2);

  // nuclei: darker discs inside tissue
  std::size_t tissue_px = 0;
  for (auto v : inside) tissue_px += v;
  const auto nuclei = static_cast<std::size_t>(spec.nuclei_density * static_cast<double>(tissue_px));
  const double nr = spec.nuclei_radius * scale;
  const int rad = static_cast<int>(std::ceil(nr));
  for (std::size_t k = 0; k < nuclei; ++k) {
    const auto cx = static_cast<int>(rng.uniform_int(0, w - 1));
    const auto cy = static_cast<int>(rng.uniform_int(0, h - 1));
    if (!inside[static_cast<std::size_t>(cy) * w + cx]) continue;
    for (int dy = -rad; dy <= rad; ++dy)
      for (int dx = -rad; dx <= rad; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= w || y >= h || dx * dx + dy * dy > nr * nr) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (inside[i]) vmul[i] = spec.nuclei_darkening;
      }
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!inside[i]) continue;
      const double v = std::clamp(spec.value * vmul[i], 0.05, 1.0);
      slide.raster.set(x, y, hsv_to_rgb({hue, spec.saturation, v}));
    }
  return slide;
}

}  // namespace canvoi::wsi
