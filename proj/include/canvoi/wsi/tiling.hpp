#pragma once

#include <string>
#include <vector>

#include "canvoi/wsi/tissue.hpp"
#include "canvoi/wsi/slide.hpp"

namespace canvoi::wsi {

struct TileOrigin {
  int x = 0;
  int y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

struct Tile {
  TileOrigin origin;
  int side_px = 0;
  Raster pixels;
  double tissue_score = 0.0;
};

// Row-major candidate origins of the floor(W/T) x floor(H/T) grid anchored at
// (0, 0); partial tiles at the right and bottom edges are not produced.
inline std::vector<TileOrigin> candidate_grid(int width, int height, int tile_px) {
  if (tile_px <= 0) throw ConfigError("tile size must be positive");
  std::vector<TileOrigin> out;
  for (int gy = 0; gy < height / tile_px; ++gy)
    for (int gx = 0; gx < width / tile_px; ++gx) out.push_back({gx * tile_px, gy * tile_px});
  return out;
}

struct GridScan {
  std::vector<Tile> kept;
  std::size_t candidates = 0;
};

// Scores every candidate tile and keeps those at or above the threshold.
// Does not throw on an empty result; see extract_tile_grid.
inline GridScan scan_tile_grid(const SlideRaster& slide, int tile_px, const TissueConfig& cfg) {
  slide.validate();
  GridScan scan;
  const auto origins = candidate_grid(slide.raster.width(), slide.raster.height(), tile_px);
  scan.candidates = origins.size();
  for (const auto& o : origins) {
    Tile t;
    t.origin = o;
    t.side_px = tile_px;
    t.pixels = crop(slide.raster, o.x, o.y, tile_px, tile_px);
    t.tissue_score = tissue_score(t.pixels, cfg);
    if (t.tissue_score >= cfg.threshold) scan.kept.push_back(std::move(t));
  }
  return scan;
}

inline std::vector<Tile> extract_tile_grid(const SlideRaster& slide, int tile_px, const TissueConfig& cfg = {}) {
  auto scan = scan_tile_grid(slide, tile_px, cfg);
  if (scan.kept.empty()) throw EmptySlideError(slide.slide_id);
  return std::move(scan.kept);
}

inline std::vector<Tile> extract_tile_grid(const SlideRaster& slide, int tile_px, double threshold) {
  TissueConfig cfg;
  cfg.threshold = threshold;
  return extract_tile_grid(slide, tile_px, cfg);
}

}  // namespace canvoi::wsi
