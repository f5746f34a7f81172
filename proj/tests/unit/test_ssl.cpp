#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "canvoi/core/rng.hpp"
#include "canvoi/nn/grad_check.hpp"
#include "canvoi/ssl/pretrain.hpp"
#include "canvoi/wsi/synthetic.hpp"

using namespace canvoi;
using namespace canvoi::ssl;

namespace {

Raster random_raster(int side, Rng& rng) {
  Raster r(side, side);
  for (auto& v : r.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return r;
}

// Smooth colour field so crops at different places differ but stay learnable.
Raster gradient_raster(int side, Rng& rng) {
  Raster r(side, side);
  const double a = rng.uniform(0, 6.28), b = rng.uniform(0, 6.28), f = rng.uniform(0.02, 0.1);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const auto c = [&](double ph) {
        return static_cast<std::uint8_t>(127.5 + 120 * std::sin(f * (x * std::cos(ph) + y * std::sin(ph))));
      };
      r.set(x, y, {c(a), c(b), c(a + b)});
    }
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("canvoi_ssl_" + name);
  std::filesystem::remove_all(p);
  return p;
}

PretrainConfig small_config(std::size_t steps) {
  PretrainConfig c;
  c.encoder = {40, 10, 1, 16, 2, 2.0, 3};
  c.head = {16, 16};
  c.crops.source_px = 60;
  c.crops.local_px = 20;
  c.crops.n_local = 3;
  c.phases = {{40, steps}};
  c.lr_warmup_steps = 2;
  c.tau_teacher_warmup_steps = 3;
  c.seed = 11;
  return c;
}

std::vector<Raster> corpus(int n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Raster> v;
  for (int i = 0; i < n; ++i) v.push_back(gradient_raster(side, rng));
  return v;
}

}  // namespace

TEST(Multicrop, CropSideExamples) {
  EXPECT_EQ(crop_side(670, 0.2), 299);
  EXPECT_EQ(crop_side(670, 0.57), 505);
  EXPECT_EQ(crop_side(670, 1.0), 670);
}

TEST(Multicrop, ViewCountsAndSizes) {
  Rng src_rng(1);
  const Raster src = random_raster(670, src_rng);
  Rng rng(5);
  const ViewSet vs = sample_multicrop(src, MulticropConfig{}, rng, "s0");
  ASSERT_EQ(vs.globals.size(), 2u);
  ASSERT_EQ(vs.locals.size(), 8u);
  EXPECT_EQ(vs.source_id, "s0");
  for (const auto& g : vs.globals) {
    EXPECT_EQ(g.width(), 380);
    EXPECT_EQ(g.height(), 380);
  }
  for (const auto& l : vs.locals) {
    EXPECT_EQ(l.width(), 140);
    EXPECT_EQ(l.height(), 140);
  }
  for (const auto& c : vs.global_crops) {
    EXPECT_LE(c.x + c.side, 670);
    EXPECT_LE(c.y + c.side, 670);
  }
}

TEST(Multicrop, Deterministic) {
  Rng src_rng(2);
  const Raster src = random_raster(670, src_rng);
  Rng a(9), b(9);
  const auto va = sample_multicrop(src, MulticropConfig{}, a);
  const auto vb = sample_multicrop(src, MulticropConfig{}, b);
  for (std::size_t i = 0; i < va.globals.size(); ++i) EXPECT_EQ(va.globals[i].data(), vb.globals[i].data());
  for (std::size_t i = 0; i < va.locals.size(); ++i) EXPECT_EQ(va.locals[i].data(), vb.locals[i].data());
}

TEST(Multicrop, ScaleRangesOverManyDraws) {
  MulticropConfig cfg;
  cfg.source_px = 60;
  cfg.global_px = 30;
  cfg.local_px = 10;
  Rng src_rng(3);
  const Raster src = random_raster(60, src_rng);
  Rng rng(4);
  int flips = 0, total = 0;
  for (int i = 0; i < 10000 / 10; ++i) {
    const auto vs = sample_multicrop(src, cfg, rng);
    for (const auto& c : vs.global_crops) {
      EXPECT_GE(c.scale, 0.2);
      EXPECT_LE(c.scale, 0.57);
      EXPECT_EQ(c.side, crop_side(60, c.scale));
      flips += c.flipped;
      ++total;
    }
    for (const auto& c : vs.local_crops) {
      EXPECT_GE(c.scale, 0.03);
      EXPECT_LE(c.scale, 0.2);
      flips += c.flipped;
      ++total;
    }
  }
  EXPECT_EQ(total, 10000);
  EXPECT_NEAR(flips / double(total), 0.5, 0.03);
}

TEST(Multicrop, RejectsWrongSource) {
  Rng rng(1);
  EXPECT_THROW(sample_multicrop(Raster(100, 100), MulticropConfig{}, rng), DimensionError);
  MulticropConfig bad;
  bad.local_px = 400;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(DinoLoss, UniformGivesLogK) {
  std::vector<double> z(4, 0.0);
  EXPECT_NEAR(dino_pair_loss<double>(z, z, z, 1.0, 1.0), std::log(4.0), 1e-15);
}

TEST(DinoLoss, LossAtLeastTeacherEntropy) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = static_cast<std::size_t>(rng.uniform_int(2, 40));
    std::vector<double> t(k), s(k), c(k);
    for (std::size_t i = 0; i < k; ++i) {
      t[i] = rng.uniform(-5, 5);
      s[i] = rng.uniform(-5, 5);
      c[i] = rng.uniform(-1, 1);
    }
    const double tt = rng.uniform(0.02, 2), ts = rng.uniform(0.02, 2);
    const double loss = dino_pair_loss<double>(t, s, c, tt, ts);
    std::vector<double> pt(k);
    for (std::size_t i = 0; i < k; ++i) pt[i] = (t[i] - c[i]) / tt;
    nn::softmax_inplace(std::span<double>(pt));
    EXPECT_GE(loss - entropy<double>(pt), -1e-9);
  }
  // equal distributions: KL is zero
  std::vector<double> t{1, 2, 3}, zero(3, 0.0);
  EXPECT_NEAR(dino_pair_loss<double>(t, t, zero, 0.5, 0.5) - entropy<double>(nn::softmax<double>(t, 0.5)), 0.0,
              1e-12);
}

TEST(DinoLoss, GradCheckK8) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<double> t(8), c(8);
    for (auto& v : t) v = rng.uniform(-1, 1);
    for (auto& v : c) v = rng.uniform(-0.2, 0.2);
    nn::ParamSet<double> ps;
    auto& s = ps.add("student", 1, 8);
    for (std::size_t i = 0; i < 8; ++i) s.value[i] = rng.uniform(-1, 1);
    auto loss = [&](nn::ParamSet<double>& p) {
      auto& q = p.at(0);
      return dino_pair_loss<double>(t, q.value.row(0), c, 0.07, 0.1, q.grad.row(0));
    };
    const auto rep = nn::grad_check(ps, loss);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst_param;
  }
}

TEST(DinoLoss, MultiViewPairingAndGrad) {
  Rng rng(3);
  nn::Tensor2D<double> t(2, 6);
  for (auto& v : t.storage()) v = rng.uniform(-1, 1);
  std::vector<double> c(6, 0.1);
  nn::ParamSet<double> ps;
  auto& s = ps.add("student", 5, 6);
  for (auto& v : s.value.storage()) v = rng.uniform(-1, 1);
  const auto full = dino_loss<double>(t, s.value, c, 0.05, 0.1);
  EXPECT_EQ(full.pairs, 2u * 5u - 2u);
  double manual = 0;
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t v = 0; v < 5; ++v)
      if (v != g) manual += dino_pair_loss<double>(t.row(g), s.value.row(v), c, 0.05, 0.1);
  EXPECT_NEAR(full.value, manual, 1e-12);

  auto loss = [&](nn::ParamSet<double>& p) {
    nn::Tensor2D<double> d;
    const auto l = dino_loss<double>(t, p.at(0).value, c, 0.05, 0.1, &d);
    nn::add_inplace(p.at(0).grad, d);
    return l.value;
  };
  // loss is O(10) while some entries are O(1e-7): a larger step keeps rounding below the floor
  nn::GradCheckOptions opt;
  opt.step = 1e-4;
  EXPECT_LT(nn::grad_check(ps, loss, opt).max_rel_error, 1e-4);
}

TEST(DinoLoss, Errors) {
  std::vector<double> a(3), b(4);
  EXPECT_THROW(dino_pair_loss<double>(a, b, a, 1, 1), DimensionError);
  EXPECT_THROW(dino_pair_loss<double>(a, a, a, 0, 1), ConfigError);
}

TEST(DistillHead, GradCheckThroughLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    DistillHead<double> head(6, {5, 8});
    nn::randomize_for_check(head.params(), rng);
    nn::Tensor2D<double> x(3, 6), t(2, 8);
    for (auto& v : x.storage()) v = rng.uniform(-1, 1);
    for (auto& v : t.storage()) v = rng.uniform(-1, 1);
    std::vector<double> c(8, 0.0);
    auto loss = [&](nn::ParamSet<double>& p) {
      head.params() = p;
      typename DistillHead<double>::Cache cache;
      const auto logits = head.forward(x, &cache);
      nn::Tensor2D<double> d;
      const auto l = dino_loss<double>(t, logits, c, 0.07, 0.1, &d);
      head.params().zero_grad();
      head.backward(cache, d);
      for (std::size_t i = 0; i < p.size(); ++i) nn::add_inplace(p.at(i).grad, head.params().at(i).grad);
      return l.value;
    };
    nn::ParamSet<double> ps = head.params();
    const auto rep = nn::grad_check(ps, loss);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst_param;
  }
}

TEST(Ema, Examples) {
  nn::ParamSet<double> t, s;
  t.add("w", 1, 3).value.fill(1.0);
  s.add("w", 1, 3).value.fill(0.0);
  auto t1 = t;
  ema_update(t1, s, 1.0);
  EXPECT_TRUE(t1.values_equal(t));
  auto t0 = t;
  ema_update(t0, s, 0.0);
  EXPECT_TRUE(t0.values_equal(s));
  ema_update(t, s, 0.99);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(t.at(0).value[i], 0.99, 1e-15);
}

TEST(Ema, StrictlyBetweenOldAndStudent) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    nn::ParamSet<float> t, s;
    t.add("a", 4, 5);
    s.add("a", 4, 5);
    for (auto& v : t.at(0).value.storage()) v = static_cast<float>(rng.uniform(-3, 3));
    for (auto& v : s.at(0).value.storage()) v = static_cast<float>(rng.uniform(-3, 3));
    const auto before = t;
    const double m = rng.uniform(0.5, 0.99);
    ema_update(t, s, m);
    for (std::size_t i = 0; i < 20; ++i) {
      const float o = before.at(0).value[i], st = s.at(0).value[i], n = t.at(0).value[i];
      EXPECT_GT(n, std::min(o, st));
      EXPECT_LT(n, std::max(o, st));
    }
  }
}

TEST(Ema, StructuralMismatch) {
  nn::ParamSet<double> a, b, c;
  a.add("w", 2, 2);
  b.add("w", 2, 3);
  c.add("v", 2, 2);
  EXPECT_THROW(ema_update(a, b, 0.5), DimensionError);
  EXPECT_THROW(ema_update(a, c, 0.5), DimensionError);
  EXPECT_THROW(ema_update(a, a, 1.5), ConfigError);
}

TEST(Center, Examples) {
  std::vector<double> c(3, 0.0), b(3, 1.0);
  auto same = c;
  update_center<double>(same, b, 1.0);
  EXPECT_EQ(same, c);
  update_center<double>(c, b, 0.9);
  for (double v : c) EXPECT_NEAR(v, 0.1, 1e-15);
}

TEST(Center, GeometricConvergence) {
  std::vector<double> c{5.0, -2.0}, b{1.0, 3.0};
  const std::vector<double> c0 = c;
  for (int n = 1; n <= 60; ++n) {
    update_center<double>(c, b, 0.9);
    for (std::size_t i = 0; i < 2; ++i)
      EXPECT_NEAR(c[i], b[i] + std::pow(0.9, n) * (c0[i] - b[i]), 1e-12);
  }
  std::vector<double> short_b{1.0};
  EXPECT_THROW(update_center<double>(c, short_b, 0.9), DimensionError);
}

TEST(Schedules, EndpointsAndMonotone) {
  EXPECT_DOUBLE_EQ(cosine_ramp(0.99, 0.999, 0, 100), 0.99);
  EXPECT_DOUBLE_EQ(cosine_ramp(0.99, 0.999, 100, 100), 0.999);
  for (std::size_t i = 1; i <= 100; ++i) EXPECT_GE(cosine_ramp(0.99, 0.999, i, 100), cosine_ramp(0.99, 0.999, i - 1, 100));
  EXPECT_DOUBLE_EQ(linear_warmup(0.04, 0.07, 0, 30), 0.04);
  EXPECT_NEAR(linear_warmup(0.04, 0.07, 15, 30), 0.055, 1e-15);
  EXPECT_DOUBLE_EQ(linear_warmup(0.04, 0.07, 30, 30), 0.07);
  EXPECT_DOUBLE_EQ(linear_warmup(0.04, 0.07, 300, 30), 0.07);
}

TEST(PretrainConfigJson, RoundTripAndUnknownKeys) {
  PretrainConfig c = small_config(7);
  c.phases = {{30, 2}, {40, 5}};
  const auto back = pretrain_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["momentum"] = 0.5;
  EXPECT_THROW(pretrain_config_from_json(j), ConfigError);
  auto k = to_json(c);
  k["phases"][0]["global_px"] = 33;
  EXPECT_THROW(pretrain_config_from_json(k), ConfigError);
}

TEST(Pretrain, ZeroStepsLeavesInitialization) {
  auto cfg = small_config(0);
  PretrainRun<float> run(cfg, corpus(2, 60, 1));
  const auto dir = temp_path("zero");
  std::filesystem::create_directories(dir);
  run.run(dir / "teacher.ckpt", dir / "loss.csv");
  vit::EncoderConfig ec = cfg.encoder;
  const vit::EncoderModel<float> init(ec, derive_seed(cfg.seed, "student_encoder"));
  const auto loaded = vit::load_encoder<float>(dir / "teacher.ckpt");
  EXPECT_TRUE(loaded.params().values_equal(init.params()));
  EXPECT_EQ(io::read_text(dir / "loss.csv"), loss_log_header());
}

TEST(Pretrain, StepInvariants) {
  PretrainRun<float> run(small_config(6), corpus(3, 60, 2));
  EXPECT_TRUE(run.teacher().params().values_equal(run.student().params()));
  while (!run.done()) {
    const auto before = run.teacher().params();
    const auto rec = run.step();
    EXPECT_TRUE(std::isfinite(rec.loss));
    const auto& after = run.teacher().params();
    const auto& student = run.student().params();
    for (std::size_t p = 0; p < after.size(); ++p) {
      for (std::size_t i = 0; i < after.at(p).value.size(); ++i) {
        const float o = before.at(p).value[i], s = student.at(p).value[i], n = after.at(p).value[i];
        ASSERT_GE(n, std::min(o, s));
        ASSERT_LE(n, std::max(o, s));
      }
      for (float g : after.at(p).grad.storage()) ASSERT_EQ(g, 0.0f);
    }
    for (const auto& p : run.teacher_head().params())
      for (float g : p.grad.storage()) ASSERT_EQ(g, 0.0f);
  }
  EXPECT_EQ(run.log().size(), 6u);
  EXPECT_GT(run.log()[5].teacher_momentum, run.log()[0].teacher_momentum);
}

TEST(Pretrain, PhaseSwitchTouchesOnlyPositions) {
  auto cfg = small_config(0);
  cfg.phases = {{30, 2}, {40, 2}};
  PretrainRun<float> run(cfg, corpus(2, 60, 3));
  run.step();
  run.step();
  EXPECT_EQ(run.student().pos_grid(), 3);
  const auto before = run.student().params();
  const auto teacher_before = run.teacher().params();
  run.switch_phase(40);
  EXPECT_EQ(run.student().pos_grid(), 4);
  EXPECT_EQ(run.teacher().pos_grid(), 4);
  for (std::size_t p = 0; p < before.size(); ++p) {
    const auto& a = before.at(p);
    const auto& b = run.student().params().at(p);
    const auto& ta = teacher_before.at(p);
    const auto& tb = run.teacher().params().at(p);
    ASSERT_EQ(a.name, b.name);
    if (a.name == "pos_embed") {
      EXPECT_EQ(b.value.rows(), 17u);
      continue;
    }
    EXPECT_EQ(a.value.storage(), b.value.storage()) << a.name;
    EXPECT_EQ(ta.value.storage(), tb.value.storage()) << a.name;
  }
  run.step();  // already at 40: no second resample
  EXPECT_EQ(run.log().back().phase, 1u);
}

TEST(Pretrain, RerunIsBitIdentical) {
  auto cfg = small_config(5);
  const auto dir = temp_path("rerun");
  std::filesystem::create_directories(dir);
  for (int r = 0; r < 2; ++r) {
    PretrainRun<float> run(cfg, corpus(3, 60, 4));
    run.run(dir / ("t" + std::to_string(r) + ".ckpt"), dir / ("l" + std::to_string(r) + ".csv"));
  }
  EXPECT_EQ(io::read_file(dir / "t0.ckpt"), io::read_file(dir / "t1.ckpt"));
  EXPECT_EQ(io::read_text(dir / "l0.csv"), io::read_text(dir / "l1.csv"));
  const auto text = io::read_text(dir / "l0.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

TEST(Pretrain, LossDecreasesOnSmallCorpus) {
  PretrainConfig cfg;
  cfg.encoder = {100, 10, 1, 64, 2, 2.0, 3};
  cfg.crops.source_px = 180;
  cfg.crops.local_px = 40;
  cfg.crops.n_local = 3;
  cfg.phases = {{100, 200}};
  std::vector<Raster> sources;
  for (int i = 0; i < 16; ++i) {
    wsi::SyntheticSpec s;
    s.class_id = i % 2;
    s.site = (i / 2) % 3;
    s.width = s.height = 670;
    sources.push_back(resize_bilinear(wsi::generate_synthetic_slide(s, 1000 + i, "s").raster, 180, 180));
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    PretrainRun<float> run(cfg, sources);
    while (!run.done()) run.step();
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      first += run.log()[i].loss;
      last += run.log()[run.log().size() - 1 - i].loss;
    }
    EXPECT_LT(last, first) << "seed " << seed;
  }
}

TEST(Pretrain, Errors) {
  EXPECT_THROW(PretrainRun<float>(small_config(1), {}), DataError);
  EXPECT_THROW(PretrainRun<float>(small_config(1), corpus(1, 50, 1)), DimensionError);
  auto cfg = small_config(1);
  cfg.phases = {{35, 1}};
  EXPECT_THROW(cfg.validate(), ConfigError);
  PretrainRun<float> run(small_config(1), corpus(1, 60, 1));
  run.step();
  EXPECT_THROW(run.step(), ConfigError);
}
