#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/core/json_fields.hpp"
#include "canvoi/nn/adam.hpp"
#include "canvoi/ssl/dino.hpp"
#include "canvoi/ssl/multicrop.hpp"
#include "canvoi/vit/encoder_io.hpp"

namespace canvoi::ssl {

struct PretrainPhase {
  int global_px = 380;
  std::size_t steps = 0;
};

struct PretrainConfig {
  vit::EncoderConfig encoder{380, 10, 2, 64, 4, 4.0, 3};
  HeadConfig head{};
  MulticropConfig crops{};
  std::vector<PretrainPhase> phases{{380, 200}};
  double lr = 1e-4;
  std::size_t lr_warmup_steps = 10;
  double weight_decay = 0.04;
  double tau_student = 0.1;
  double tau_teacher_start = 0.07;
  double tau_teacher_end = 0.07;
  std::size_t tau_teacher_warmup_steps = 30;
  double momentum_start = 0.9;
  double momentum_end = 0.99;
  double center_momentum = 0.9;
  // prototype directions stay at their initial values for this many steps
  std::size_t freeze_prototypes_steps = 0;
  std::size_t batch_sources = 1;  // sources per optimizer step
  std::uint64_t seed = 0;

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.steps;
    return n;
  }

  void validate() const {
    encoder.validate();
    head.validate();
    crops.validate();
    if (phases.empty()) throw ConfigError("pretrain schedule needs at least one phase");
    for (const auto& p : phases) {
      if (p.global_px % encoder.patch_px != 0)
        throw ConfigError("phase global size " + std::to_string(p.global_px) + " not divisible by patch " +
                          std::to_string(encoder.patch_px));
      if (p.global_px <= crops.local_px) throw ConfigError("phase global size must exceed local size");
    }
    if (crops.local_px % encoder.patch_px != 0)
      throw ConfigError("local view size " + std::to_string(crops.local_px) + " not divisible by patch");
    if (batch_sources < 1) throw ConfigError("batch_sources must be >= 1");
    if (!(lr > 0.0) || weight_decay < 0.0) throw ConfigError("lr must be positive and weight decay >= 0");
    if (!(tau_student > 0.0 && tau_teacher_start > 0.0 && tau_teacher_end > 0.0))
      throw ConfigError("temperatures must be positive");
    for (double m : {momentum_start, momentum_end, center_momentum})
      if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momenta must lie in [0, 1]");
  }
};

inline nlohmann::json to_json(const PretrainConfig& c) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : c.phases) phases.push_back({{"global_px", p.global_px}, {"steps", p.steps}});
  return {
      {"encoder", ckpt::to_json(c.encoder)},
      {"head", {{"bottleneck", c.head.bottleneck}, {"prototypes", c.head.prototypes}}},
      {"crops",
       {{"source_px", c.crops.source_px},
        {"local_px", c.crops.local_px},
        {"n_global", c.crops.n_global},
        {"n_local", c.crops.n_local},
        {"global_scale", {c.crops.global_scale.lo, c.crops.global_scale.hi}},
        {"local_scale", {c.crops.local_scale.lo, c.crops.local_scale.hi}},
        {"flip_probability", c.crops.flip_probability}}},
      {"phases", phases},
      {"lr", c.lr},
      {"lr_warmup_steps", c.lr_warmup_steps},
      {"weight_decay", c.weight_decay},
      {"tau_student", c.tau_student},
      {"tau_teacher_start", c.tau_teacher_start},
      {"tau_teacher_end", c.tau_teacher_end},
      {"tau_teacher_warmup_steps", c.tau_teacher_warmup_steps},
      {"momentum_start", c.momentum_start},
      {"momentum_end", c.momentum_end},
      {"center_momentum", c.center_momentum},
      {"freeze_prototypes_steps", c.freeze_prototypes_steps},
      {"batch_sources", c.batch_sources},
      {"seed", c.seed},
  };
}

// Missing keys keep their defaults; unknown keys are rejected.
inline PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  using jsonf::read_opt;
  jsonf::reject_unknown(j,
                         {"encoder", "head", "crops", "phases", "lr", "lr_warmup_steps", "weight_decay",
                          "tau_student", "tau_teacher_start", "tau_teacher_end", "tau_teacher_warmup_steps",
                          "momentum_start", "momentum_end", "center_momentum", "freeze_prototypes_steps", "batch_sources", "seed"},
                         "pretrain config");
  PretrainConfig c;
  if (j.contains("encoder")) {
    try {
      c.encoder = ckpt::encoder_config_from_json(j.at("encoder"));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad encoder config: ") + e.what());
    }
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    jsonf::reject_unknown(h, {"bottleneck", "prototypes"}, "head config");
    read_opt(h, "bottleneck", c.head.bottleneck);
    read_opt(h, "prototypes", c.head.prototypes);
  }
  if (j.contains("crops")) {
    const auto& m = j.at("crops");
    jsonf::reject_unknown(
        m, {"source_px", "local_px", "n_global", "n_local", "global_scale", "local_scale", "flip_probability"},
        "crops config");
    read_opt(m, "source_px", c.crops.source_px);
    read_opt(m, "local_px", c.crops.local_px);
    read_opt(m, "n_global", c.crops.n_global);
    read_opt(m, "n_local", c.crops.n_local);
    read_opt(m, "flip_probability", c.crops.flip_probability);
    for (auto [key, range] : {std::pair{"global_scale", &c.crops.global_scale},
                              std::pair{"local_scale", &c.crops.local_scale}}) {
      std::vector<double> v{range->lo, range->hi};
      read_opt(m, key, v);
      if (v.size() != 2) throw ConfigError(std::string(key) + " must be [lo, hi]");
      *range = {v[0], v[1]};
    }
  }
  if (j.contains("phases")) {
    c.phases.clear();
    for (const auto& p : j.at("phases")) {
      jsonf::reject_unknown(p, {"global_px", "steps"}, "phase");
      PretrainPhase ph;
      read_opt(p, "global_px", ph.global_px);
      read_opt(p, "steps", ph.steps);
      c.phases.push_back(ph);
    }
  }
  read_opt(j, "lr", c.lr);
  read_opt(j, "lr_warmup_steps", c.lr_warmup_steps);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "tau_student", c.tau_student);
  read_opt(j, "tau_teacher_start", c.tau_teacher_start);
  read_opt(j, "tau_teacher_end", c.tau_teacher_end);
  read_opt(j, "tau_teacher_warmup_steps", c.tau_teacher_warmup_steps);
  read_opt(j, "momentum_start", c.momentum_start);
  read_opt(j, "momentum_end", c.momentum_end);
  read_opt(j, "center_momentum", c.center_momentum);
  read_opt(j, "freeze_prototypes_steps", c.freeze_prototypes_steps);
  read_opt(j, "batch_sources", c.batch_sources);
  read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

struct StepRecord {
  std::size_t step = 0;
  std::size_t phase = 0;
  double loss = 0.0;
  double teacher_momentum = 0.0;
  double lr = 0.0;
};

inline std::string loss_log_header() { return "step,phase,loss,teacher_momentum,lr\n"; }

inline std::string loss_log_row(const StepRecord& r) {
  return fmt::format("{},{},{:.9e},{:.9e},{:.9e}\n", r.step, r.phase, r.loss, r.teacher_momentum, r.lr);
}

// Student/teacher self-distillation over a fixed corpus of square sources.
// Call step() until done(); the teacher encoder is the artifact.
template <class T>
class PretrainRun {
 public:
  PretrainRun(PretrainConfig cfg, std::vector<Raster> sources) : cfg_(std::move(cfg)), sources_(std::move(sources)) {
    cfg_.validate();
    if (sources_.empty()) throw DataError("pretraining corpus is empty");
    for (const auto& s : sources_)
      if (s.width() != cfg_.crops.source_px || s.height() != cfg_.crops.source_px)
        throw DimensionError("pretraining source must be " + std::to_string(cfg_.crops.source_px) +
                             " px square");
    vit::EncoderConfig ec = cfg_.encoder;
    ec.tile_px = cfg_.phases.front().global_px;
    student_ = vit::EncoderModel<T>(ec, derive_seed(cfg_.seed, "student_encoder"));
    student_head_ = DistillHead<T>(ec.width, cfg_.head);
    student_head_.initialize(derive_seed(cfg_.seed, "student_head"));
    teacher_ = student_;
    teacher_head_ = student_head_;
    center_.assign(static_cast<std::size_t>(cfg_.head.prototypes), T(0));
    nn::AdamConfig ac{cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay};
    adam_encoder_ = nn::AdamState<T>(ac);
    adam_head_ = nn::AdamState<T>(ac);
    rng_ = Rng(cfg_.seed, "pretrain_views");
  }

  const PretrainConfig& config() const { return cfg_; }
  std::size_t steps_done() const { return step_; }
  bool done() const { return step_ >= cfg_.total_steps(); }
  const vit::EncoderModel<T>& student() const { return student_; }
  const vit::EncoderModel<T>& teacher() const { return teacher_; }
  const DistillHead<T>& student_head() const { return student_head_; }
  const DistillHead<T>& teacher_head() const { return teacher_head_; }
  const std::vector<T>& center() const { return center_; }
  const std::vector<StepRecord>& log() const { return log_; }

  std::size_t phase_of(std::size_t step) const {
    std::size_t end = 0;
    for (std::size_t i = 0; i < cfg_.phases.size(); ++i) {
      end += cfg_.phases[i].steps;
      if (step < end) return i;
    }
    return cfg_.phases.size() - 1;
  }

  double momentum_at(std::size_t step) const {
    return cosine_ramp(cfg_.momentum_start, cfg_.momentum_end, step, cfg_.total_steps());
  }
  double lr_at(std::size_t step) const {
    if (step < cfg_.lr_warmup_steps)
      return cfg_.lr * static_cast<double>(step + 1) / static_cast<double>(cfg_.lr_warmup_steps);
    return cfg_.lr;
  }
  double tau_teacher_at(std::size_t step) const {
    return linear_warmup(cfg_.tau_teacher_start, cfg_.tau_teacher_end, step, cfg_.tau_teacher_warmup_steps);
  }

  // Moves student and teacher to a new global view size. Only the position
  // table changes; its Adam moments are dropped since the shape changed.
  void switch_phase(int global_px) {
    student_.resample_position_grid(global_px);
    teacher_.resample_position_grid(global_px);
    adam_encoder_.reset("pos_embed");
  }

  StepRecord step() {
    if (done()) throw ConfigError("pretraining schedule already complete");
    const std::size_t phase = phase_of(step_);
    const int gpx = cfg_.phases[phase].global_px;
    if (student_.config().tile_px != gpx) switch_phase(gpx);

    MulticropConfig mc = cfg_.crops;
    mc.global_px = gpx;
    const T tau_t = T(tau_teacher_at(step_)), tau_s = T(cfg_.tau_student);
    const std::size_t width = static_cast<std::size_t>(cfg_.encoder.width);
    const std::size_t batch = cfg_.batch_sources;
    student_.params().zero_grad();
    student_head_.params().zero_grad();
    std::vector<T> mean(center_.size(), T(0));
    std::size_t teacher_rows = 0;
    double loss_sum = 0.0;

    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t src = next_source();
      const ViewSet views = sample_multicrop(sources_[src], mc, rng_, std::to_string(src));
      std::vector<vit::Image<T>> images;
      for (const auto& r : views.globals) images.push_back(vit::to_image<T>(r));
      for (const auto& r : views.locals) images.push_back(vit::to_image<T>(r));
      const std::size_t n_g = views.globals.size(), n_v = images.size();

      // teacher: globals only, no caches, never differentiated
      nn::Tensor2D<T> t_embed(n_g, width);
      for (std::size_t i = 0; i < n_g; ++i) {
        const auto e = teacher_.encode(images[i]);
        std::copy(e.begin(), e.end(), t_embed.row(i).begin());
      }
      const nn::Tensor2D<T> t_logits = teacher_head_.forward(t_embed);
      for (std::size_t i = 0; i < n_g; ++i)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += t_logits(i, k);
      teacher_rows += n_g;

      std::vector<typename vit::EncoderModel<T>::Cache> caches(n_v);
      nn::Tensor2D<T> s_embed(n_v, width);
      for (std::size_t i = 0; i < n_v; ++i) {
        const auto e = student_.forward(images[i], caches[i]);
        std::copy(e.begin(), e.end(), s_embed.row(i).begin());
      }
      typename DistillHead<T>::Cache head_cache;
      const nn::Tensor2D<T> s_logits = student_head_.forward(s_embed, &head_cache);

      nn::Tensor2D<T> d_logits;
      const DinoLoss loss = dino_loss(t_logits, s_logits, std::span<const T>(center_), tau_t, tau_s, &d_logits);
      if (!std::isfinite(loss.value)) {
        if (!abort_checkpoint_.empty()) vit::save_encoder(abort_checkpoint_, teacher_);
        throw NumericAbort("non-finite distillation loss at step " + std::to_string(step_),
                           static_cast<long long>(step_));
      }
      loss_sum += loss.value;
      // reported loss is the per-source mean, so scale its gradient alike
      const T inv_b = T(1.0 / static_cast<double>(batch));
      for (auto& v : d_logits.storage()) v *= inv_b;
      const nn::Tensor2D<T> d_embed = student_head_.backward(head_cache, d_logits);
      for (std::size_t i = 0; i < n_v; ++i) student_.backward(caches[i], d_embed.row(i));
    }
    if (step_ < cfg_.freeze_prototypes_steps) student_head_.params()["head.prototypes"].grad.fill(T(0));

    const double lr = lr_at(step_);
    adam_encoder_.config.lr = lr;
    adam_head_.config.lr = lr;
    nn::adam_step(student_.params(), adam_encoder_);
    nn::adam_step(student_head_.params(), adam_head_);

    const double m = momentum_at(step_);
    ema_update(teacher_.params(), student_.params(), m);
    ema_update(teacher_head_.params(), student_head_.params(), m);

    for (auto& v : mean) v /= T(static_cast<double>(teacher_rows));
    update_center(center_, std::span<const T>(mean), cfg_.center_momentum);

    StepRecord rec{step_, phase, loss_sum / static_cast<double>(batch), m, lr};
    log_.push_back(rec);
    ++step_;
    return rec;
  }

  // Sources are visited in a fresh shuffled order each pass.
  std::size_t next_source() {
    if (cursor_ == 0) {
      order_.resize(sources_.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      rng_.shuffle(order_);
    }
    const std::size_t src = order_[cursor_];
    cursor_ = (cursor_ + 1) % order_.size();
    return src;
  }

  // Where the last good teacher goes if a step produces a non-finite loss.
  void set_abort_checkpoint(std::filesystem::path p) { abort_checkpoint_ = std::move(p); }

  std::string log_csv() const {
    std::string s = loss_log_header();
    for (const auto& r : log_) s += loss_log_row(r);
    return s;
  }

  // Runs the remaining schedule, then writes the teacher checkpoint and CSV log.
  void run(const std::filesystem::path& checkpoint, const std::filesystem::path& log_path) {
    set_abort_checkpoint(checkpoint);
    try {
      while (!done()) step();
    } catch (const NumericAbort&) {
      io::write_text_atomic(log_path, log_csv());
      throw;
    }
    finalize_geometry();
    vit::save_encoder(checkpoint, teacher_);
    io::write_text_atomic(log_path, log_csv());
  }

  // The checkpoint geometry follows the last phase even when no step ran in it.
  void finalize_geometry() {
    const int last = cfg_.phases.back().global_px;
    if (student_.config().tile_px != last) switch_phase(last);
  }

 private:
  PretrainConfig cfg_;
  std::vector<Raster> sources_;
  vit::EncoderModel<T> student_, teacher_;
  DistillHead<T> student_head_, teacher_head_;
  std::vector<T> center_;
  nn::AdamState<T> adam_encoder_, adam_head_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
  std::vector<StepRecord> log_;
  std::filesystem::path abort_checkpoint_;
};

}  // namespace canvoi::ssl
