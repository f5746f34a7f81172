#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canvoi/core/json_fields.hpp"
#include "canvoi/flops/analytic.hpp"
#include "canvoi/mil/train.hpp"
#include "canvoi/ssl/pretrain.hpp"
#include "canvoi/wsi/synthetic.hpp"
#include "canvoi/wsi/tissue.hpp"

namespace canvoi::cli {

using nlohmann::json;
using jsonf::read_opt;

inline json to_json(const wsi::TissueConfig& c) {
  return {{"canny_low", c.canny_low},       {"canny_high", c.canny_high},     {"blur_sigma", c.blur_sigma},
          {"bg_luminance", c.bg_luminance}, {"bg_saturation", c.bg_saturation}, {"edge_weight", c.edge_weight},
          {"color_weight", c.color_weight}, {"threshold", c.threshold}};
}

inline wsi::TissueConfig tissue_config_from_json(const json& j) {
  jsonf::reject_unknown(j,
                        {"canny_low", "canny_high", "blur_sigma", "bg_luminance", "bg_saturation", "edge_weight",
                         "color_weight", "threshold"},
                        "tissue config");
  wsi::TissueConfig c;
  read_opt(j, "canny_low", c.canny_low);
  read_opt(j, "canny_high", c.canny_high);
  read_opt(j, "blur_sigma", c.blur_sigma);
  read_opt(j, "bg_luminance", c.bg_luminance);
  read_opt(j, "bg_saturation", c.bg_saturation);
  read_opt(j, "edge_weight", c.edge_weight);
  read_opt(j, "color_weight", c.color_weight);
  read_opt(j, "threshold", c.threshold);
  c.validate();
  return c;
}

inline json to_json(const mil::TrainSpec& s, bool with_seed) {
  json j = mil::to_json(s);
  if (!with_seed) j.erase("seed");
  return j;
}

// The seed of a MIL spec always comes from the command's seed.
inline mil::TrainSpec train_spec_from_json(const json& j) {
  jsonf::reject_unknown(j, {"lr", "weight_decay", "epochs", "batch_size", "hidden"}, "train config");
  mil::TrainSpec s;
  read_opt(j, "lr", s.lr);
  read_opt(j, "weight_decay", s.weight_decay);
  read_opt(j, "epochs", s.epochs);
  read_opt(j, "batch_size", s.batch_size);
  read_opt(j, "hidden", s.hidden);
  s.validate();
  return s;
}

inline std::uint64_t seed_of(const json& j, const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) {
  if (flag) return *flag;
  std::uint64_t s = fallback;
  read_opt(j, "seed", s);
  return s;
}

// synth: a labelled cohort of synthetic slides spread over sites.
struct SynthConfig {
  int n_slides = 40;
  int n_classes = 2;
  int n_sites = 3;
  double mpp = 0.5;
  wsi::SyntheticSpec slide{};  // class_id and site are set per slide
  std::uint64_t seed = 0;

  SynthConfig() {
    slide.width = 1520;
    slide.height = 1520;
  }

  void validate() const {
    if (n_slides < 1 || n_classes < 2 || n_sites < 1) throw ConfigError("synth needs slides >= 1, classes >= 2, sites >= 1");
    if (!(mpp > 0.0)) throw ConfigError("synth mpp must be positive");
  }
};

inline json to_json(const SynthConfig& c) {
  const auto& s = c.slide;
  return {{"n_slides", c.n_slides},
          {"n_classes", c.n_classes},
          {"n_sites", c.n_sites},
          {"mpp", c.mpp},
          {"width", s.width},
          {"height", s.height},
          {"blob_count", s.blob_count},
          {"blob_radius_min", s.blob_radius_min},
          {"blob_radius_max", s.blob_radius_max},
          {"base_hue", s.base_hue},
          {"class_hue_separation", s.class_hue_separation},
          {"site_hue_shift", s.site_hue_shift},
          {"saturation", s.saturation},
          {"value", s.value},
          {"texture_amplitude", s.texture_amplitude},
          {"nuclei_density", s.nuclei_density},
          {"nuclei_radius", s.nuclei_radius},
          {"nuclei_darkening", s.nuclei_darkening},
          {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const json& j, const std::optional<std::uint64_t>& seed) {
  jsonf::reject_unknown(j,
                        {"n_slides", "n_classes", "n_sites", "mpp", "width", "height", "blob_count",
                         "blob_radius_min", "blob_radius_max", "base_hue", "class_hue_separation", "site_hue_shift",
                         "saturation", "value", "texture_amplitude", "nuclei_density", "nuclei_radius",
                         "nuclei_darkening", "seed"},
                        "synth config");
  SynthConfig c;
  auto& s = c.slide;
  read_opt(j, "n_slides", c.n_slides);
  read_opt(j, "n_classes", c.n_classes);
  read_opt(j, "n_sites", c.n_sites);
  read_opt(j, "mpp", c.mpp);
  read_opt(j, "width", s.width);
  read_opt(j, "height", s.height);
  read_opt(j, "blob_count", s.blob_count);
  read_opt(j, "blob_radius_min", s.blob_radius_min);
  read_opt(j, "blob_radius_max", s.blob_radius_max);
  read_opt(j, "base_hue", s.base_hue);
  read_opt(j, "class_hue_separation", s.class_hue_separation);
  read_opt(j, "site_hue_shift", s.site_hue_shift);
  read_opt(j, "saturation", s.saturation);
  read_opt(j, "value", s.value);
  read_opt(j, "texture_amplitude", s.texture_amplitude);
  read_opt(j, "nuclei_density", s.nuclei_density);
  read_opt(j, "nuclei_radius", s.nuclei_radius);
  read_opt(j, "nuclei_darkening", s.nuclei_darkening);
  c.seed = seed_of(j, seed);
  s.mpp = c.mpp;
  c.validate();
  return c;
}

// tile: tissue statistics per manifest slide.
struct TileConfig {
  std::string manifest;
  int tile_px = 380;
  wsi::TissueConfig tissue{};
};

inline json to_json(const TileConfig& c) {
  return {{"manifest", c.manifest}, {"tile_px", c.tile_px}, {"tissue", to_json(c.tissue)}};
}

inline TileConfig tile_config_from_json(const json& j) {
  jsonf::reject_unknown(j, {"manifest", "tile_px", "tissue", "seed"}, "tile config");
  TileConfig c;
  c.manifest = jsonf::read_req<std::string>(j, "manifest", "tile config");
  read_opt(j, "tile_px", c.tile_px);
  if (j.contains("tissue")) c.tissue = tissue_config_from_json(j.at("tissue"));
  if (c.tile_px < 1) throw ConfigError("tile_px must be positive");
  return c;
}

// pretrain: sources are tissue tiles of crops.source_px cut from the manifest
// slides.
struct PretrainCliConfig {
  std::string manifest;
  std::size_t max_sources = 64;
  wsi::TissueConfig tissue{};
  ssl::PretrainConfig pretrain{};
};

inline json to_json(const PretrainCliConfig& c) {
  return {{"manifest", c.manifest},
          {"max_sources", c.max_sources},
          {"tissue", to_json(c.tissue)},
          {"pretrain", ssl::to_json(c.pretrain)},
          {"seed", c.pretrain.seed}};
}

inline PretrainCliConfig pretrain_cli_config_from_json(const json& j, const std::optional<std::uint64_t>& seed) {
  jsonf::reject_unknown(j, {"manifest", "max_sources", "tissue", "pretrain", "seed"}, "pretrain command config");
  PretrainCliConfig c;
  c.manifest = jsonf::read_req<std::string>(j, "manifest", "pretrain command config");
  read_opt(j, "max_sources", c.max_sources);
  if (j.contains("tissue")) c.tissue = tissue_config_from_json(j.at("tissue"));
  if (j.contains("pretrain")) c.pretrain = ssl::pretrain_config_from_json(j.at("pretrain"));
  c.pretrain.seed = seed_of(j, seed, c.pretrain.seed);
  if (c.max_sources < 1) throw ConfigError("max_sources must be >= 1");
  return c;
}

// embed: every tissue tile of every slide through a trained encoder.
struct EmbedConfig {
  std::string manifest;
  std::string checkpoint;
  int tile_px = 0;  // 0: the encoder's tile size
  wsi::TissueConfig tissue{};
};

inline json to_json(const EmbedConfig& c) {
  return {{"manifest", c.manifest}, {"checkpoint", c.checkpoint}, {"tile_px", c.tile_px}, {"tissue", to_json(c.tissue)}};
}

inline EmbedConfig embed_config_from_json(const json& j) {
  jsonf::reject_unknown(j, {"manifest", "checkpoint", "tile_px", "tissue", "seed"}, "embed config");
  EmbedConfig c;
  c.manifest = jsonf::read_req<std::string>(j, "manifest", "embed config");
  c.checkpoint = jsonf::read_req<std::string>(j, "checkpoint", "embed config");
  read_opt(j, "tile_px", c.tile_px);
  if (j.contains("tissue")) c.tissue = tissue_config_from_json(j.at("tissue"));
  if (c.tile_px < 0) throw ConfigError("tile_px must be >= 0");
  return c;
}

// mil: leave-one-group-out plan plus one model per fold.
struct MilConfig {
  std::string store;
  int folds = 5;
  int n_classes = 0;  // 0: max label + 1
  mil::TrainSpec train{};
  std::uint64_t seed = 0;
};

inline json to_json(const MilConfig& c) {
  return {{"store", c.store},
          {"folds", c.folds},
          {"n_classes", c.n_classes},
          {"train", to_json(c.train, false)},
          {"seed", c.seed}};
}

inline MilConfig mil_config_from_json(const json& j, const std::optional<std::uint64_t>& seed) {
  jsonf::reject_unknown(j, {"store", "folds", "n_classes", "train", "seed"}, "mil config");
  MilConfig c;
  c.store = jsonf::read_req<std::string>(j, "store", "mil config");
  read_opt(j, "folds", c.folds);
  read_opt(j, "n_classes", c.n_classes);
  if (j.contains("train")) c.train = train_spec_from_json(j.at("train"));
  c.seed = seed_of(j, seed);
  if (c.folds < 2) throw ConfigError("folds must be >= 2");
  if (c.n_classes == 1 || c.n_classes < 0) throw ConfigError("n_classes must be 0 or >= 2");
  return c;
}

enum class ZPool { test, validation };

inline ZPool zpool_from_string(const std::string& s) {
  if (s == "test") return ZPool::test;
  if (s == "validation") return ZPool::validation;
  throw ConfigError("zscore_pool must be 'test' or 'validation'");
}

inline const char* zpool_name(ZPool p) { return p == ZPool::test ? "test" : "validation"; }

// eval: scores the held-out group of every iteration with its fold ensemble.
struct EvalConfig {
  std::string store;
  std::string models;  // output directory of mil
  std::string task = "task";
  ZPool zscore_pool = ZPool::test;
};

inline json to_json(const EvalConfig& c) {
  return {{"store", c.store}, {"models", c.models}, {"task", c.task}, {"zscore_pool", zpool_name(c.zscore_pool)}};
}

inline EvalConfig eval_config_from_json(const json& j) {
  jsonf::reject_unknown(j, {"store", "models", "task", "zscore_pool", "seed"}, "eval config");
  EvalConfig c;
  c.store = jsonf::read_req<std::string>(j, "store", "eval config");
  c.models = jsonf::read_req<std::string>(j, "models", "eval config");
  read_opt(j, "task", c.task);
  std::string pool = "test";
  read_opt(j, "zscore_pool", pool);
  c.zscore_pool = zpool_from_string(pool);
  if (c.task.empty() || c.task.find_first_of(",\n\"") != std::string::npos)
    throw ConfigError("task name must be non-empty without commas, quotes or newlines");
  return c;
}

// flops: trade-off table over a geometry list.
struct FlopsCliConfig {
  std::string geometries;  // empty: built-in comparator presets
  flops::FlopsConvention convention{};
  double mpp = 0.5;
};

inline json to_json(const FlopsCliConfig& c) {
  return {{"geometries", c.geometries},
          {"convention",
           {{"fma_flops", c.convention.fma_flops},
            {"softmax_per_element", c.convention.softmax_per_element},
            {"include_minor", c.convention.include_minor}}},
          {"mpp", c.mpp}};
}

inline FlopsCliConfig flops_cli_config_from_json(const json& j) {
  jsonf::reject_unknown(j, {"geometries", "convention", "mpp", "seed"}, "flops config");
  FlopsCliConfig c;
  read_opt(j, "geometries", c.geometries);
  read_opt(j, "mpp", c.mpp);
  if (j.contains("convention")) {
    const auto& v = j.at("convention");
    jsonf::reject_unknown(v, {"fma_flops", "softmax_per_element", "include_minor"}, "flops convention");
    read_opt(v, "fma_flops", c.convention.fma_flops);
    read_opt(v, "softmax_per_element", c.convention.softmax_per_element);
    read_opt(v, "include_minor", c.convention.include_minor);
  }
  if (!(c.mpp > 0.0)) throw ConfigError("mpp must be positive");
  return c;
}

// sweep: the leave-one-group-out protocol repeated on reduced training pools.
struct SweepConfig {
  std::string store;
  std::vector<double> fractions{1.0, 0.5, 0.3, 0.1};
  int folds = 5;
  int n_classes = 0;
  std::string task = "task";
  ZPool zscore_pool = ZPool::test;
  mil::TrainSpec train{};
  std::uint64_t seed = 0;
};

inline json to_json(const SweepConfig& c) {
  return {{"store", c.store},
          {"fractions", c.fractions},
          {"folds", c.folds},
          {"n_classes", c.n_classes},
          {"task", c.task},
          {"zscore_pool", zpool_name(c.zscore_pool)},
          {"train", to_json(c.train, false)},
          {"seed", c.seed}};
}

inline SweepConfig sweep_config_from_json(const json& j, const std::optional<std::uint64_t>& seed) {
  jsonf::reject_unknown(j, {"store", "fractions", "folds", "n_classes", "task", "zscore_pool", "train", "seed"},
                        "sweep config");
  SweepConfig c;
  c.store = jsonf::read_req<std::string>(j, "store", "sweep config");
  read_opt(j, "fractions", c.fractions);
  read_opt(j, "folds", c.folds);
  read_opt(j, "n_classes", c.n_classes);
  read_opt(j, "task", c.task);
  std::string pool = "test";
  read_opt(j, "zscore_pool", pool);
  c.zscore_pool = zpool_from_string(pool);
  if (j.contains("train")) c.train = train_spec_from_json(j.at("train"));
  c.seed = seed_of(j, seed);
  if (c.fractions.empty()) throw ConfigError("sweep needs at least one fraction");
  for (double f : c.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
  if (c.folds < 2) throw ConfigError("folds must be >= 2");
  if (c.n_classes == 1 || c.n_classes < 0) throw ConfigError("n_classes must be 0 or >= 2");
  return c;
}

}  // namespace canvoi::cli
