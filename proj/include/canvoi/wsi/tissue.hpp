#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "canvoi/core/error.hpp"
#include "canvoi/core/raster.hpp"

namespace canvoi::wsi {

struct TissueConfig {
  double canny_low = 40.0;    // on the 8-bit gradient magnitude
  double canny_high = 120.0;
  double blur_sigma = 1.4;
  double bg_luminance = 220.0;  // background if luminance above this ...
  double bg_saturation = 0.08;  // ... and HSV saturation below this
  double edge_weight = 0.3;
  double color_weight = 0.7;
  double threshold = 0.25;

  void validate() const {
    if (!(canny_low >= 0.0) || !(canny_high >= canny_low))
      throw ConfigError("canny thresholds must satisfy 0 <= low <= high");
    if (!(blur_sigma > 0.0)) throw ConfigError("blur sigma must be positive");
    if (edge_weight < 0.0 || color_weight < 0.0 || edge_weight + color_weight > 1.0 + 1e-12)
      throw ConfigError("tissue weights must be non-negative and sum to at most 1");
  }
};

// Integer Canny. Everything up to the threshold comparison is exact integer
// arithmetic with symmetric kernels and borders, so the edge map of a rotated
// or mirrored tile is the rotated or mirrored edge map.
class CannyDetector {
 public:
  explicit CannyDetector(const TissueConfig& cfg) {
    cfg.validate();
    const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * cfg.blur_sigma)));
    kernel_.resize(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i)
      kernel_[static_cast<std::size_t>(i + radius)] =
          std::lround(256.0 * std::exp(-0.5 * i * i / (cfg.blur_sigma * cfg.blur_sigma)));
    std::int64_t sum = 0;
    for (auto k : kernel_) sum += k;
    // gradient values carry a factor 1000 (luminance weights) * sum^2 (blur)
    const double unit = 1000.0 * static_cast<double>(sum) * static_cast<double>(sum);
    low_sq_ = square(cfg.canny_low * unit);
    high_sq_ = square(cfg.canny_high * unit);
  }

  // 1 where an edge pixel survives hysteresis.
  std::vector<std::uint8_t> edges(const Raster& r) const {
    const int w = r.width(), h = r.height();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<std::uint8_t> out(n, 0);
    if (w < 3 || h < 3) return out;

    std::vector<std::int64_t> lum(n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto* p = r.px(x, y);
        lum[idx(x, y, w)] = 299 * p[0] + 587 * p[1] + 114 * p[2];
      }
    const auto blurred = blur(lum, w, h);

    std::vector<std::int64_t> gx(n), gy(n);
    std::vector<__int128> mag(n);
    auto at = [&](int x, int y) {
      x = std::clamp(x, 0, w - 1);
      y = std::clamp(y, 0, h - 1);
      return blurred[idx(x, y, w)];
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::int64_t sx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                                (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
        const std::int64_t sy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                                (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
        const std::size_t i = idx(x, y, w);
        gx[i] = sx;
        gy[i] = sy;
        mag[i] = static_cast<__int128>(sx) * sx + static_cast<__int128>(sy) * sy;
      }

    // non-maximum suppression along the quantised gradient direction;
    // tan(22.5 deg) ~ 414/1000 and its reciprocal keep the bins symmetric
    std::vector<std::uint8_t> cls(n, 0);  // 0 none, 1 weak, 2 strong
    auto mag_at = [&](int x, int y) -> __int128 {
      if (x < 0 || y < 0 || x >= w || y >= h) return 0;
      return mag[idx(x, y, w)];
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = idx(x, y, w);
        const __int128 m = mag[i];
        if (m == 0 || m < low_sq_) continue;
        const std::int64_t ax = gx[i] < 0 ? -gx[i] : gx[i];
        const std::int64_t ay = gy[i] < 0 ? -gy[i] : gy[i];
        int dx, dy;
        if (1000 * static_cast<__int128>(ay) <= 414 * static_cast<__int128>(ax)) {
          dx = 1, dy = 0;
        } else if (1000 * static_cast<__int128>(ax) <= 414 * static_cast<__int128>(ay)) {
          dx = 0, dy = 1;
        } else {
          dx = 1;
          dy = ((gx[i] > 0) == (gy[i] > 0)) ? 1 : -1;
        }
        if (m >= mag_at(x + dx, y + dy) && m >= mag_at(x - dx, y - dy))
          cls[i] = m >= high_sq_ ? 2 : 1;
      }

    // hysteresis: weak pixels 8-connected to a strong one
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i)
      if (cls[i] == 2) {
        out[i] = 1;
        stack.push_back(i);
      }
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      for (int ny = y - 1; ny <= y + 1; ++ny)
        for (int nx = x - 1; nx <= x + 1; ++nx) {
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t j = idx(nx, ny, w);
          if (cls[j] != 0 && !out[j]) {
            out[j] = 1;
            stack.push_back(j);
          }
        }
    }
    return out;
  }

 private:
  static std::size_t idx(int x, int y, int w) { return static_cast<std::size_t>(y) * w + x; }
  static __int128 square(double v) {
    const auto c = static_cast<__int128>(std::ceil(v));
    return c * c;
  }

  static int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  }

  std::vector<std::int64_t> blur(const std::vector<std::int64_t>& src, int w, int h) const {
    const int radius = static_cast<int>(kernel_.size() / 2);
    std::vector<std::int64_t> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::int64_t acc = 0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel_[static_cast<std::size_t>(k + radius)] * src[idx(reflect101(x + k, w), y, w)];
        tmp[idx(x, y, w)] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::int64_t acc = 0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel_[static_cast<std::size_t>(k + radius)] * tmp[idx(x, reflect101(y + k, h), w)];
        out[idx(x, y, w)] = acc;
      }
    return out;
  }

  std::vector<std::int64_t> kernel_;
  __int128 low_sq_ = 0;
  __int128 high_sq_ = 0;
};

inline bool is_background(const std::uint8_t* p, const TissueConfig& cfg) {
  const int lum1000 = 299 * p[0] + 587 * p[1] + 114 * p[2];
  const int mx = std::max({p[0], p[1], p[2]});
  const int mn = std::min({p[0], p[1], p[2]});
  const bool bright = lum1000 > cfg.bg_luminance * 1000.0;
  const bool grey = mx == 0 || (mx - mn) < cfg.bg_saturation * mx;
  return bright && grey;
}

struct TissueBreakdown {
  double edge_density = 0.0;
  double non_background = 0.0;
  double score = 0.0;
};

inline TissueBreakdown tissue_breakdown(const Raster& tile, const TissueConfig& cfg = {}) {
  const CannyDetector canny(cfg);
  const auto e = canny.edges(tile);
  std::size_t edges = 0, tissue = 0;
  for (auto v : e) edges += v;
  for (int y = 0; y < tile.height(); ++y)
    for (int x = 0; x < tile.width(); ++x) tissue += is_background(tile.px(x, y), cfg) ? 0 : 1;
  const double n = static_cast<double>(e.size());
  TissueBreakdown b;
  if (n == 0) return b;
  b.edge_density = static_cast<double>(edges) / n;
  b.non_background = static_cast<double>(tissue) / n;
  b.score = cfg.edge_weight * b.edge_density + cfg.color_weight * b.non_background;
  return b;
}

// Weighted tissue-presence score in [0, 1].
inline double tissue_score(const Raster& tile, const TissueConfig& cfg = {}) {
  return tissue_breakdown(tile, cfg).score;
}

}  // namespace canvoi::wsi
