#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "canvoi/core/raster.hpp"
#include "canvoi/core/rng.hpp"

namespace canvoi::ssl {

struct ScaleRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct MulticropConfig {
  int source_px = 670;
  int global_px = 380;
  int local_px = 140;
  int n_global = 2;
  int n_local = 8;
  ScaleRange global_scale{0.2, 0.57};
  ScaleRange local_scale{0.03, 0.2};
  double flip_probability = 0.5;

  void validate() const {
    if (source_px <= 0 || global_px <= 0 || local_px <= 0) throw ConfigError("view sizes must be positive");
    if (global_px <= local_px) throw ConfigError("global views must be larger than local views");
    if (n_global < 1 || n_local < 0) throw ConfigError("need at least one global view");
    for (const auto& r : {global_scale, local_scale})
      if (!(r.lo > 0.0 && r.hi >= r.lo && r.hi <= 1.0))
        throw ConfigError("crop scale range must satisfy 0 < lo <= hi <= 1");
  }
};

// Side of a square crop covering area fraction s of a side x side source.
inline int crop_side(int source_px, double s) {
  return static_cast<int>(std::floor(source_px * std::sqrt(s)));
}

struct CropRecord {
  double scale = 0.0;  // sampled area fraction
  int side = 0;
  int x = 0;
  int y = 0;
  bool flipped = false;
};

struct ViewSet {
  std::string source_id;
  std::vector<Raster> globals;
  std::vector<Raster> locals;
  std::vector<CropRecord> global_crops;
  std::vector<CropRecord> local_crops;

  std::size_t size() const { return globals.size() + locals.size(); }
};

namespace detail {
inline Raster sample_view(const Raster& src, ScaleRange range, int out_px, double flip_p, Rng& rng,
                          CropRecord& rec) {
  rec.scale = rng.uniform(range.lo, range.hi);
  rec.side = std::max(1, crop_side(src.width(), rec.scale));
  rec.x = static_cast<int>(rng.uniform_int(0, src.width() - rec.side));
  rec.y = static_cast<int>(rng.uniform_int(0, src.height() - rec.side));
  rec.flipped = rng.bernoulli(flip_p);
  Raster v = resize_bilinear(src, rec.x, rec.y, rec.side, rec.side, out_px, out_px);
  return rec.flipped ? flip_horizontal(v) : v;
}
}  // namespace detail

// Large and small square views of one source tile. Globals are drawn first,
// then locals, all from the caller's generator.
inline ViewSet sample_multicrop(const Raster& source, const MulticropConfig& cfg, Rng& rng,
                                const std::string& source_id = "") {
  cfg.validate();
  if (source.width() != cfg.source_px || source.height() != cfg.source_px)
    throw DimensionError("multicrop source must be " + std::to_string(cfg.source_px) + " px square, got " +
                         std::to_string(source.width()) + "x" + std::to_string(source.height()));
  ViewSet vs;
  vs.source_id = source_id;
  for (int i = 0; i < cfg.n_global; ++i) {
    CropRecord rec;
    vs.globals.push_back(detail::sample_view(source, cfg.global_scale, cfg.global_px, cfg.flip_probability, rng, rec));
    vs.global_crops.push_back(rec);
  }
  for (int i = 0; i < cfg.n_local; ++i) {
    CropRecord rec;
    vs.locals.push_back(detail::sample_view(source, cfg.local_scale, cfg.local_px, cfg.flip_probability, rng, rec));
    vs.local_crops.push_back(rec);
  }
  return vs;
}

}  // namespace canvoi::ssl
