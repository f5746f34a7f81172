#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "canvoi/core/error.hpp"

namespace canvoi::vit {

struct EncoderConfig {
  int tile_px = 380;
  int patch_px = 10;
  int depth = 40;
  int width = 1408;
  int heads = 16;
  double mlp_ratio = 6144.0 / 1408.0;
  int channels = 3;

  int grid() const { return tile_px / patch_px; }
  int tokens() const { return grid() * grid() + 1; }
  int patch_dim() const { return channels * patch_px * patch_px; }
  int mlp_hidden() const { return static_cast<int>(std::lround(mlp_ratio * width)); }

  void validate() const {
    if (tile_px <= 0 || patch_px <= 0 || depth <= 0 || width <= 0 || heads <= 0 || channels <= 0 ||
        !(mlp_ratio > 0.0))
      throw ConfigError("encoder geometry values must all be positive");
    if (tile_px % patch_px != 0)
      throw ConfigError("tile " + std::to_string(tile_px) + " px is not divisible by patch " +
                        std::to_string(patch_px) + " px");
    if (width % heads != 0)
      throw ConfigError("width " + std::to_string(width) + " not divisible by " +
                        std::to_string(heads) + " heads");
    if (mlp_hidden() <= 0) throw ConfigError("mlp hidden size rounds to zero");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Patch tokens per tile, (T/P)^2.
inline std::int64_t token_count(int tile_px, int patch_px) {
  if (patch_px <= 0 || tile_px % patch_px != 0)
    throw ConfigError("tile " + std::to_string(tile_px) + " not divisible by patch " +
                      std::to_string(patch_px));
  const std::int64_t g = tile_px / patch_px;
  return g * g;
}

// Closed-form trainable parameter count.
inline std::int64_t param_count(const EncoderConfig& c) {
  c.validate();
  const std::int64_t d = c.width, h = c.mlp_hidden(), g = c.grid();
  const std::int64_t patch = static_cast<std::int64_t>(c.patch_dim()) * d + d;
  const std::int64_t cls = d;
  const std::int64_t pos = (g * g + 1) * d;
  const std::int64_t per_block = 2 * d                // norm1
                                 + 3 * d * d + 3 * d  // qkv
                                 + d * d + d          // output projection
                                 + 2 * d              // norm2
                                 + d * h + h          // fc1
                                 + h * d + d;         // fc2
  const std::int64_t final_norm = 2 * d;
  return patch + cls + pos + c.depth * per_block + final_norm;
}

inline std::int64_t block_param_count(const EncoderConfig& c) {
  const std::int64_t d = c.width, h = c.mlp_hidden();
  return 4 * d + 4 * d * d + 4 * d + 2 * d * h + h + d;
}

struct NamedGeometry {
  std::string name;
  EncoderConfig config;
};

// ViT-g/10 at 380 px: depth 40, width 1408, 16 heads, MLP hidden 6144.
inline EncoderConfig vit_g10_380() { return {380, 10, 40, 1408, 16, 6144.0 / 1408.0, 3}; }

// Same trunk at the common 224/14 geometry.
inline EncoderConfig vit_g14_224() { return {224, 14, 40, 1408, 16, 6144.0 / 1408.0, 3}; }

// Comparator geometries (also shipped as data/geometries.json). Tile and patch
// sizes drive the compute comparison; SwiGLU trunks are expressed as the
// plain-MLP hidden size with the same parameter count (1.5x the gated width).
inline std::vector<NamedGeometry> comparator_presets() {
  return {
      {"ViT-g10-380", vit_g10_380()},
      {"H-optimus-0", {224, 14, 40, 1536, 24, 6144.0 / 1536.0, 3}},
      {"Prov-GigaPath", {224, 14, 40, 1536, 24, 6144.0 / 1536.0, 3}},
      {"Virchow", {224, 14, 32, 1280, 16, 5124.0 / 1280.0, 3}},
      {"Hibou-L", {224, 14, 24, 1024, 16, 4096.0 / 1024.0, 3}},
  };
}

}  // namespace canvoi::vit
