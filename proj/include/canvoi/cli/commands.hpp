#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "canvoi/cli/common.hpp"
#include "canvoi/cli/configs.hpp"
#include "canvoi/cli/protocol.hpp"
#include "canvoi/core/raster.hpp"
#include "canvoi/flops/tradeoff.hpp"
#include "canvoi/vit/encoder_io.hpp"
#include "canvoi/wsi/magnification.hpp"
#include "canvoi/wsi/manifest.hpp"
#include "canvoi/wsi/tiling.hpp"

namespace canvoi::cli {

namespace fs = std::filesystem;

inline std::vector<wsi::ManifestRecord> load_manifest(const fs::path& path) {
  require_file(path, "manifest");
  auto records = wsi::read_manifest(path);
  if (records.empty()) throw DataError("manifest " + path.string() + " lists no slides");
  return records;
}

// Reads a slide raster and brings it to the working resolution.
inline wsi::SlideRaster load_slide(const fs::path& manifest, const wsi::ManifestRecord& r) {
  const auto p = wsi::resolve_slide_path(manifest, r);
  if (!fs::exists(p)) throw NotFoundError("slide " + r.slide_id + ": " + p.string() + " does not exist");
  wsi::SlideRaster s{read_ppm(p), r.mpp, r.slide_id, r.group_id, r.label};
  return wsi::normalize_magnification(s);
}

inline std::string label_text(const std::optional<int>& l) { return l ? std::to_string(*l) : std::string(); }

// --- synth -----------------------------------------------------------------

inline int cmd_synth(const CommonOptions& opt, const json& j) {
  const auto cfg = synth_config_from_json(j, opt.seed);
  write_resolved_config(opt, to_json(cfg));
  fs::create_directories(opt.out / "slides");
  std::vector<wsi::ManifestRecord> records;
  for (int i = 0; i < cfg.n_slides; ++i) {
    auto spec = cfg.slide;
    spec.class_id = i % cfg.n_classes;
    spec.site = (i / cfg.n_classes) % cfg.n_sites;
    const std::string id = fmt::format("slide_{:03d}", i);
    const auto slide = wsi::generate_synthetic_slide(spec, derive_seed(cfg.seed, "synth:" + id), id);
    const std::string rel = "slides/" + id + ".ppm";
    write_ppm(opt.out / rel, slide.raster);
    records.push_back({id, rel, cfg.mpp, fmt::format("site{}", spec.site), spec.class_id});
  }
  wsi::write_manifest(opt.out / "manifest.jsonl", records);
  return 0;
}

// --- tile ------------------------------------------------------------------

inline int cmd_tile(const CommonOptions& opt, const json& j) {
  auto cfg = tile_config_from_json(j);
  const auto manifest = resolve_input(opt.config_path, cfg.manifest);
  write_resolved_config(opt, to_json(cfg));
  const auto records = load_manifest(manifest);
  std::string stats = "slide_id,group_id,label,candidates,kept,kept_fraction,mean_tissue_score\n";
  std::string tiles = "slide_id,x,y,tissue_score\n";
  for (const auto& r : records) {
    const auto slide = load_slide(manifest, r);
    const auto scan = wsi::scan_tile_grid(slide, cfg.tile_px, cfg.tissue);
    double mean = 0.0;
    for (const auto& t : scan.kept) {
      mean += t.tissue_score;
      tiles += fmt::format("{},{},{},{:.6f}\n", r.slide_id, t.origin.x, t.origin.y, t.tissue_score);
    }
    if (!scan.kept.empty()) mean /= static_cast<double>(scan.kept.size());
    const double frac = scan.candidates ? static_cast<double>(scan.kept.size()) / static_cast<double>(scan.candidates) : 0.0;
    stats += fmt::format("{},{},{},{},{},{:.6f},{:.6f}\n", r.slide_id, r.group_id, label_text(r.label),
                         scan.candidates, scan.kept.size(), frac, mean);
  }
  io::write_text_atomic(opt.out / "tile_stats.csv", stats);
  io::write_text_atomic(opt.out / "tiles.csv", tiles);
  return 0;
}

// --- pretrain --------------------------------------------------------------

struct SourceTile {
  std::string slide_id;
  wsi::TileOrigin origin;
  Raster pixels;
};

// Tissue tiles of the source size in manifest order, thinned to `max` by a
// seeded draw that keeps the original order.
inline std::vector<SourceTile> collect_sources(const fs::path& manifest, const PretrainCliConfig& cfg) {
  std::vector<SourceTile> all;
  for (const auto& r : load_manifest(manifest)) {
    const auto slide = load_slide(manifest, r);
    auto scan = wsi::scan_tile_grid(slide, cfg.pretrain.crops.source_px, cfg.tissue);
    for (auto& t : scan.kept) all.push_back({r.slide_id, t.origin, std::move(t.pixels)});
  }
  if (all.empty()) throw DataError("no tissue tile of the source size in any slide");
  if (all.size() <= cfg.max_sources) return all;
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(cfg.pretrain.seed, "pretrain_sources");
  rng.shuffle(idx);
  idx.resize(cfg.max_sources);
  std::sort(idx.begin(), idx.end());
  std::vector<SourceTile> out;
  for (std::size_t i : idx) out.push_back(std::move(all[i]));
  return out;
}

template <class T>
void run_pretrain(const CommonOptions& opt, const PretrainCliConfig& cfg, std::vector<Raster> sources) {
  ssl::PretrainRun<T> run(cfg.pretrain, std::move(sources));
  run.run(opt.out / "encoder.ckpt", opt.out / "loss.csv");
}

inline int cmd_pretrain(const CommonOptions& opt, const json& j) {
  const auto cfg = pretrain_cli_config_from_json(j, opt.seed);
  cfg.pretrain.validate();
  const auto manifest = resolve_input(opt.config_path, cfg.manifest);
  write_resolved_config(opt, to_json(cfg));
  auto tiles = collect_sources(manifest, cfg);
  std::string listing = "slide_id,x,y\n";
  std::vector<Raster> sources;
  for (auto& t : tiles) {
    listing += fmt::format("{},{},{}\n", t.slide_id, t.origin.x, t.origin.y);
    sources.push_back(std::move(t.pixels));
  }
  io::write_text_atomic(opt.out / "sources.csv", listing);
  if (opt.precision == Precision::f64)
    run_pretrain<double>(opt, cfg, std::move(sources));
  else
    run_pretrain<float>(opt, cfg, std::move(sources));
  return 0;
}

// --- embed -----------------------------------------------------------------

template <class T>
void embed_all(const CommonOptions& opt, const EmbedConfig& cfg, const fs::path& manifest, const fs::path& ckpt_path) {
  const auto encoder = vit::load_encoder<T>(ckpt_path);
  const int tile_px = cfg.tile_px > 0 ? cfg.tile_px : encoder.config().tile_px;
  if (tile_px % encoder.config().patch_px != 0)
    throw ConfigError(fmt::format("tile_px {} is not divisible by the encoder patch {}", tile_px,
                                  encoder.config().patch_px));
  const auto records = load_manifest(manifest);
  std::string skipped = "slide_id,reason\n";
  wsi::EmbeddingStoreWriter writer(opt.out / "embeddings.cvoi");
  for (const auto& r : records) {
    const auto slide = load_slide(manifest, r);
    const auto scan = wsi::scan_tile_grid(slide, tile_px, cfg.tissue);
    if (scan.kept.empty()) {
      skipped += r.slide_id + ",no_tissue\n";
      continue;
    }
    wsi::EmbeddingBag bag;
    bag.slide_id = r.slide_id;
    bag.group_id = r.group_id;
    bag.label = r.label;
    bag.embeddings = nn::Tensor2D<float>(scan.kept.size(), static_cast<std::size_t>(encoder.config().width));
    for (std::size_t i = 0; i < scan.kept.size(); ++i) {
      const auto e = encoder.encode(scan.kept[i].pixels);
      for (std::size_t k = 0; k < e.size(); ++k) bag.embeddings(i, k) = static_cast<float>(e[k]);
      bag.origins.push_back(scan.kept[i].origin);
    }
    writer.write(bag);
  }
  writer.close();
  io::write_text_atomic(opt.out / "skipped.csv", skipped);
}

inline int cmd_embed(const CommonOptions& opt, const json& j) {
  const auto cfg = embed_config_from_json(j);
  const auto manifest = resolve_input(opt.config_path, cfg.manifest);
  const auto ckpt_path = resolve_input(opt.config_path, cfg.checkpoint);
  write_resolved_config(opt, to_json(cfg));
  require_file(ckpt_path, "checkpoint");
  if (opt.precision == Precision::f64)
    embed_all<double>(opt, cfg, manifest, ckpt_path);
  else
    embed_all<float>(opt, cfg, manifest, ckpt_path);
  return 0;
}

// --- mil -------------------------------------------------------------------

template <class T>
void train_plan(const CommonOptions& opt, const MilConfig& cfg, const Cohort& cohort, const eval::SplitPlan& plan) {
  std::string log = "group,fold,epoch,loss\n";
  fs::create_directories(opt.out / "models");
  for (const auto& it : plan.iterations)
    for (std::size_t f = 0; f < it.folds.size(); ++f) {
      const auto r = train_on<T>(cohort, it.folds[f].train, cfg.train, fold_seed(cfg.seed, it.held_out_group, f));
      for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
        log += fmt::format("{},{},{},{:.9e}\n", it.held_out_group, f, e, r.epoch_loss[e]);
      ckpt::save(opt.out / "models" / model_file_name(it.held_out_group, f), mil::abmil_checkpoint(r.model));
    }
  io::write_text_atomic(opt.out / "train_log.csv", log);
}

inline int cmd_mil(const CommonOptions& opt, const json& j) {
  const auto cfg = mil_config_from_json(j, opt.seed);
  const auto store = resolve_input(opt.config_path, cfg.store);
  write_resolved_config(opt, to_json(cfg));
  require_file(store, "store");
  const auto cohort = load_cohort(store, cfg.n_classes);
  const auto plan = eval::logo_plan(cohort.refs, cfg.folds, cfg.seed);
  eval::check_plan(plan, cohort.refs);
  io::write_text_atomic(opt.out / "plan.json", eval::to_json(plan).dump(2) + "\n");
  if (opt.precision == Precision::f64)
    train_plan<double>(opt, cfg, cohort, plan);
  else
    train_plan<float>(opt, cfg, cohort, plan);
  return 0;
}

// --- eval ------------------------------------------------------------------

template <class T>
void evaluate_plan(const CommonOptions& opt, const EvalConfig& cfg, const fs::path& store, const fs::path& models) {
  const auto plan_path = models / "plan.json";
  require_file(plan_path, "split plan");
  eval::SplitPlan plan;
  try {
    plan = eval::split_plan_from_json(json::parse(io::read_text(plan_path)));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("split plan is not valid JSON: ") + e.what(), e.byte);
  }
  std::vector<std::vector<mil::AbmilModel<T>>> by_iteration;
  for (const auto& it : plan.iterations) {
    std::vector<mil::AbmilModel<T>> ms;
    for (std::size_t f = 0; f < it.folds.size(); ++f) {
      const auto p = models / "models" / model_file_name(it.held_out_group, f);
      require_file(p, "MIL checkpoint");
      ms.push_back(mil::abmil_from_checkpoint<T>(ckpt::load(p)));
    }
    by_iteration.push_back(std::move(ms));
  }
  int n_classes = 0;
  for (const auto& ms : by_iteration)
    for (const auto& m : ms) {
      if (n_classes && m.config().n_classes != n_classes) throw DataError("fold models disagree on class count");
      n_classes = m.config().n_classes;
    }
  if (!n_classes) throw BookkeepingError("missing scores: the split plan holds no models");
  const auto cohort = load_cohort(store, n_classes);

  std::vector<eval::SlideScore> scored;
  std::vector<eval::ScoreRow> rows;
  for (std::size_t i = 0; i < plan.iterations.size(); ++i) {
    auto s = ensemble_iteration(cohort, plan.iterations[i], by_iteration[i], cfg.zscore_pool, cfg.task, &rows);
    scored.insert(scored.end(), s.begin(), s.end());
  }
  eval::MetricReport report;
  report.tasks.push_back(eval::merged_cohort_eval(cfg.task, scored, cohort.refs));
  eval::check_plan(plan, cohort.refs);
  report.finalize();
  io::write_text_atomic(opt.out / "scores.csv", eval::score_rows_csv(rows));
  io::write_text_atomic(opt.out / "report.json", eval::to_json(report).dump(2) + "\n");
}

inline int cmd_eval(const CommonOptions& opt, const json& j) {
  const auto cfg = eval_config_from_json(j);
  const auto store = resolve_input(opt.config_path, cfg.store);
  const auto models = resolve_input(opt.config_path, cfg.models);
  write_resolved_config(opt, to_json(cfg));
  require_file(store, "store");
  if (opt.precision == Precision::f64)
    evaluate_plan<double>(opt, cfg, store, models);
  else
    evaluate_plan<float>(opt, cfg, store, models);
  return 0;
}

// --- flops -----------------------------------------------------------------

inline int cmd_flops(const CommonOptions& opt, const json& j) {
  const auto cfg = flops_cli_config_from_json(j);
  const auto geom_path = resolve_input(opt.config_path, cfg.geometries);
  write_resolved_config(opt, to_json(cfg));
  std::vector<vit::NamedGeometry> geoms;
  if (geom_path.empty()) {
    geoms = vit::comparator_presets();
  } else {
    require_file(geom_path, "geometry list");
    try {
      geoms = flops::geometries_from_json(json::parse(io::read_text(geom_path)));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("geometry list is not valid JSON: ") + e.what());
    }
  }
  const auto rows = flops::tradeoff_table(geoms, cfg.convention, cfg.mpp);
  json breakdown = json::array();
  for (const auto& g : geoms) {
    const auto b = flops::analytic_flops(g.config, cfg.convention);
    breakdown.push_back({{"model", g.name},
                         {"tokens", b.tokens},
                         {"patch_projection", b.patch_projection},
                         {"position", b.position},
                         {"norms", b.norms},
                         {"qkv", b.qkv},
                         {"attention_scores", b.attention_scores},
                         {"softmax", b.softmax},
                         {"attention_apply", b.attention_apply},
                         {"output_projection", b.output_projection},
                         {"mlp", b.mlp},
                         {"activation", b.activation},
                         {"residual", b.residual},
                         {"head", b.head},
                         {"total", b.total()}});
  }
  io::write_text_atomic(opt.out / "tradeoff.csv", flops::tradeoff_csv(rows));
  io::write_text_atomic(opt.out / "tradeoff.svg", flops::tradeoff_svg(rows));
  io::write_text_atomic(opt.out / "breakdown.json", breakdown.dump(2) + "\n");
  return 0;
}

// --- sweep -----------------------------------------------------------------

inline std::string curve_csv(const std::vector<eval::ReductionRow>& rows) {
  std::string s = "fraction,train_size,averaged_auc\n";
  for (const auto& r : rows) s += fmt::format("{:.4f},{:.4f},{:.9f}\n", r.fraction, r.train_size, r.averaged_auc);
  return s;
}

// Averaged AUC against label fraction, x axis in percent.
inline std::string curve_svg(const std::vector<eval::ReductionRow>& rows) {
  const double w = 480, h = 320, l = 60, r = 20, t = 30, b = 50;
  auto px = [&](double f) { return l + f * (w - l - r); };
  auto py = [&](double a) { return h - b - a * (h - t - b); };
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">Averaged AUC vs labelled fraction</text>\n"
      "<line x1=\"{3}\" y1=\"{4}\" x2=\"{5}\" y2=\"{4}\" stroke=\"black\"/>\n"
      "<line x1=\"{3}\" y1=\"{6}\" x2=\"{3}\" y2=\"{4}\" stroke=\"black\"/>\n",
      w, h, l, l, h - b, w - r, t);
  for (int k = 0; k <= 4; ++k) {
    const double v = k * 0.25;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                     "text-anchor=\"middle\">{:.0f}%</text>\n",
                     px(v), h - b + 15, v * 100);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                     "text-anchor=\"end\">{:.2f}</text>\n",
                     l - 5, py(v) + 3, v);
  }
  std::vector<eval::ReductionRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& c) { return a.fraction < c.fraction; });
  std::string pts;
  for (const auto& row : sorted) {
    pts += fmt::format("{:.1f},{:.1f} ", px(row.fraction), py(row.averaged_auc));
    s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"steelblue\"/>\n", px(row.fraction),
                     py(row.averaged_auc));
  }
  s += "<polyline fill=\"none\" stroke=\"steelblue\" points=\"" + pts + "\"/>\n</svg>\n";
  return s;
}

inline int cmd_sweep(const CommonOptions& opt, const json& j) {
  auto cfg = sweep_config_from_json(j, opt.seed);
  // largest fraction first so training sizes read down the file
  std::sort(cfg.fractions.begin(), cfg.fractions.end(), std::greater<>());
  cfg.fractions.erase(std::unique(cfg.fractions.begin(), cfg.fractions.end()), cfg.fractions.end());
  const auto store = resolve_input(opt.config_path, cfg.store);
  write_resolved_config(opt, to_json(cfg));
  require_file(store, "store");
  const auto cohort = load_cohort(store, cfg.n_classes);
  const auto plan = eval::logo_plan(cohort.refs, cfg.folds, cfg.seed);
  eval::check_plan(plan, cohort.refs);

  eval::MetricReport report;
  for (double f : cfg.fractions) {
    const auto r = opt.precision == Precision::f64
                       ? run_protocol<double>(cohort, plan, cfg.train, cfg.seed, f, cfg.zscore_pool, cfg.task)
                       : run_protocol<float>(cohort, plan, cfg.train, cfg.seed, f, cfg.zscore_pool, cfg.task);
    if (report.tasks.empty()) report.tasks.push_back(r.metric);
    report.reductions.push_back({f, r.mean_train_size, r.metric.value});
  }
  report.finalize();
  io::write_text_atomic(opt.out / "curve.csv", curve_csv(report.reductions));
  io::write_text_atomic(opt.out / "curve.svg", curve_svg(report.reductions));
  io::write_text_atomic(opt.out / "report.json", eval::to_json(report).dump(2) + "\n");
  return 0;
}

}  // namespace canvoi::cli
