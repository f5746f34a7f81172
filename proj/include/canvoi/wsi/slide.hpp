#pragma once

#include <optional>
#include <string>

#include "canvoi/core/error.hpp"
#include "canvoi/core/raster.hpp"

namespace canvoi::wsi {

inline constexpr double kTargetMpp = 0.5;

struct SlideRaster {
  Raster raster;
  double mpp = kTargetMpp;
  std::string slide_id;
  std::string group_id;
  std::optional<int> label;

  void validate() const {
    if (!(mpp > 0.0)) throw ConfigError("slide " + slide_id + ": mpp must be positive");
    if (raster.empty()) throw DataError("slide " + slide_id + ": empty raster");
  }
};

}  // namespace canvoi::wsi
