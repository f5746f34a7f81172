#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "canvoi/wsi/slide.hpp"

namespace canvoi::wsi {

namespace detail {

// Source cells covered by one output cell when a box filter maps `src` cells
// onto `dst` cells (dst <= src): the first index and the overlap lengths.
struct Span {
  int first = 0;
  std::vector<double> weights;
};

inline std::vector<Span> area_spans(int src, int dst) {
  std::vector<Span> spans(static_cast<std::size_t>(dst));
  const double step = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    const double lo = o * step, hi = (o + 1) * step;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
    Span& s = spans[static_cast<std::size_t>(o)];
    s.first = first;
    for (int i = first; i <= last; ++i) {
      const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      s.weights.push_back(std::max(0.0, w));
    }
  }
  return spans;
}

inline Raster area_downsample(const Raster& src, int out_w, int out_h) {
  const int w = src.width(), h = src.height();
  const auto xs = area_spans(w, out_w);
  const auto ys = area_spans(h, out_h);
  // horizontal pass into doubles, then vertical pass with normalisation
  std::vector<double> tmp(static_cast<std::size_t>(out_w) * h * 3, 0.0);
  for (int y = 0; y < h; ++y)
    for (int ox = 0; ox < out_w; ++ox) {
      const auto& s = xs[static_cast<std::size_t>(ox)];
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (std::size_t k = 0; k < s.weights.size(); ++k) {
        const std::uint8_t* p = src.px(s.first + static_cast<int>(k), y);
        for (int c = 0; c < 3; ++c) acc[c] += s.weights[k] * p[c];
        total += s.weights[k];
      }
      double* t = &tmp[(static_cast<std::size_t>(y) * out_w + ox) * 3];
      for (int c = 0; c < 3; ++c) t[c] = acc[c] / total;
    }
  Raster out(out_w, out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    const auto& s = ys[static_cast<std::size_t>(oy)];
    for (int ox = 0; ox < out_w; ++ox) {
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (std::size_t k = 0; k < s.weights.size(); ++k) {
        const double* t = &tmp[(static_cast<std::size_t>(s.first + static_cast<int>(k)) * out_w + ox) * 3];
        for (int c = 0; c < 3; ++c) acc[c] += s.weights[k] * t[c];
        total += s.weights[k];
      }
      std::uint8_t* p = out.px(ox, oy);
      for (int c = 0; c < 3; ++c) p[c] = to_u8(acc[c] / total);
    }
  }
  return out;
}

}  // namespace detail

// Rescales a slide to `target_mpp` (default 0.5 um/px). Coarser targets use
// exact area averaging, finer targets bilinear interpolation. A slide already
// at the target is returned as a bit-exact copy.
inline SlideRaster normalize_magnification(const SlideRaster& slide, double target_mpp = kTargetMpp) {
  slide.validate();
  SlideRaster out = slide;
  out.mpp = target_mpp;
  if (slide.mpp == target_mpp) return out;
  const double factor = slide.mpp / target_mpp;
  const int w = std::max(1, static_cast<int>(std::lround(slide.raster.width() * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(slide.raster.height() * factor)));
  if (factor < 1.0)
    out.raster = detail::area_downsample(slide.raster, w, h);
  else
    out.raster = resize_bilinear(slide.raster, w, h);
  return out;
}

}  // namespace canvoi::wsi
