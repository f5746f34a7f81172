#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "canvoi/core/json_fields.hpp"
#include "canvoi/flops/analytic.hpp"

namespace canvoi::flops {

inline constexpr double kMicronsPerPixel = 0.5;

// Tiles covering 1 mm^2 of tissue at the given resolution (fractional).
inline double tiles_per_mm2(int tile_px, double mpp = kMicronsPerPixel) {
  if (tile_px <= 0 || !(mpp > 0.0)) throw ConfigError("tile size and mpp must be positive");
  const double per_side = 1000.0 / mpp / static_cast<double>(tile_px);
  return per_side * per_side;
}

struct TradeoffRow {
  std::string model;
  int tile_px = 0;
  int patch_px = 0;
  std::int64_t tokens = 0;  // patch tokens, (T/P)^2
  std::int64_t params = 0;
  double gflops_per_tile = 0.0;
  double tiles_per_mm2 = 0.0;
  double gflops_per_mm2 = 0.0;
  double embeddings_per_mm2 = 0.0;  // one embedding per tile
};

// Rows in input order.
inline std::vector<TradeoffRow> tradeoff_table(const std::vector<vit::NamedGeometry>& geoms,
                                               const FlopsConvention& conv = {},
                                               double mpp = kMicronsPerPixel) {
  std::vector<TradeoffRow> rows;
  rows.reserve(geoms.size());
  for (const auto& g : geoms) {
    TradeoffRow r;
    r.model = g.name;
    r.tile_px = g.config.tile_px;
    r.patch_px = g.config.patch_px;
    r.tokens = vit::token_count(g.config.tile_px, g.config.patch_px);
    r.params = vit::param_count(g.config);
    r.gflops_per_tile = analytic_flops(g.config, conv).gflops();
    r.tiles_per_mm2 = tiles_per_mm2(g.config.tile_px, mpp);
    r.gflops_per_mm2 = r.gflops_per_tile * r.tiles_per_mm2;
    r.embeddings_per_mm2 = r.tiles_per_mm2;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string tradeoff_csv(const std::vector<TradeoffRow>& rows) {
  std::string s =
      "model,tile_px,patch_px,tokens,params,gflops_per_tile,tiles_per_mm2,gflops_per_mm2,embeddings_per_mm2\n";
  for (const auto& r : rows)
    s += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.model, r.tile_px, r.patch_px, r.tokens,
                     r.params, r.gflops_per_tile, r.tiles_per_mm2, r.gflops_per_mm2, r.embeddings_per_mm2);
  return s;
}

// Two bar panels: compute per tile and compute per mm^2.
inline std::string tradeoff_svg(const std::vector<TradeoffRow>& rows) {
  const int bar = 56, gap = 24, left = 70, top = 40, ph = 220, panel_gap = 90;
  const int pw = static_cast<int>(rows.size()) * (bar + gap) + gap;
  const int width = left + 2 * pw + panel_gap + 20;
  const int height = top + ph + 90;
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  auto panel = [&](int x0, const char* title, auto value) {
    double vmax = 0.0;
    for (const auto& r : rows) vmax = std::max(vmax, value(r));
    if (!(vmax > 0.0)) vmax = 1.0;
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"13\">{}</text>\n", x0, top - 18, title);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", x0, top, top + ph);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", x0, top + ph, x0 + pw);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = value(rows[i]);
      const int h = static_cast<int>(v / vmax * ph + 0.5);
      const int x = x0 + gap + static_cast<int>(i) * (bar + gap);
      s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", x, top + ph - h, bar, h,
                       i == 0 ? "#c0392b" : "#7f8c8d");
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.1f}</text>\n", x + bar / 2,
                       top + ph - h - 4, v);
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x + bar / 2, top + ph + 16,
                       rows[i].model);
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555\">{}/{}</text>\n", x + bar / 2,
                       top + ph + 30, rows[i].tile_px, rows[i].patch_px);
    }
  };
  panel(left, "GFLOPs per tile", [](const TradeoffRow& r) { return r.gflops_per_tile; });
  panel(left + pw + panel_gap, "GFLOPs per mm² tissue", [](const TradeoffRow& r) { return r.gflops_per_mm2; });
  s += "</svg>\n";
  return s;
}

// Preset file: {"geometries": [{"name", "tile_px", "patch_px", "depth", "width",
// "heads", "mlp_hidden", "channels"}, ...]}.
inline std::vector<vit::NamedGeometry> geometries_from_json(const nlohmann::json& j) {
  jsonf::reject_unknown(j, {"geometries"}, "geometry file");
  if (!j.contains("geometries") || !j.at("geometries").is_array())
    throw ConfigError("geometry file needs a 'geometries' array");
  std::vector<vit::NamedGeometry> out;
  for (const auto& g : j.at("geometries")) {
    const char* what = "geometry";
    jsonf::reject_unknown(g, {"name", "tile_px", "patch_px", "depth", "width", "heads", "mlp_hidden", "channels"},
                          what);
    vit::NamedGeometry ng;
    ng.name = jsonf::read_req<std::string>(g, "name", what);
    auto& c = ng.config;
    c.tile_px = jsonf::read_req<int>(g, "tile_px", what);
    c.patch_px = jsonf::read_req<int>(g, "patch_px", what);
    c.depth = jsonf::read_req<int>(g, "depth", what);
    c.width = jsonf::read_req<int>(g, "width", what);
    c.heads = jsonf::read_req<int>(g, "heads", what);
    const int hidden = jsonf::read_req<int>(g, "mlp_hidden", what);
    c.channels = 3;
    jsonf::read_opt(g, "channels", c.channels);
    if (c.width <= 0) throw ConfigError("geometry " + ng.name + ": width must be positive");
    c.mlp_ratio = static_cast<double>(hidden) / static_cast<double>(c.width);
    c.validate();
    if (c.mlp_hidden() != hidden) throw ConfigError("geometry " + ng.name + ": hidden size not representable");
    out.push_back(std::move(ng));
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<vit::NamedGeometry>& geoms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : geoms)
    arr.push_back({{"name", g.name},
                   {"tile_px", g.config.tile_px},
                   {"patch_px", g.config.patch_px},
                   {"depth", g.config.depth},
                   {"width", g.config.width},
                   {"heads", g.config.heads},
                   {"mlp_hidden", g.config.mlp_hidden()},
                   {"channels", g.config.channels}});
  return {{"geometries", arr}};
}

}  // namespace canvoi::flops
