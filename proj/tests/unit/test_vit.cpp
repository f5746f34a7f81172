#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "canvoi/core/rng.hpp"
#include "canvoi/nn/grad_check.hpp"
#include "canvoi/vit/encoder_io.hpp"
#include "canvoi/vit/pos_embed.hpp"

using namespace canvoi;
using namespace canvoi::vit;

namespace {

EncoderConfig tiny(int tile = 20, int patch = 5) { return {tile, patch, 2, 8, 2, 2.0, 3}; }

Image<double> random_image(int side, Rng& rng) {
  Image<double> img(side);
  for (auto& v : img.data) v = rng.uniform(-2, 2);
  return img;
}

Raster random_raster(int w, int h, Rng& rng) {
  Raster r(w, h);
  for (auto& v : r.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "canvoi_test_vit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Geometry, TokenCounts) {
  EXPECT_EQ(token_count(380, 10), 1444);
  EXPECT_EQ(token_count(224, 14), 256);
  EXPECT_THROW(token_count(380, 14), ConfigError);
}

TEST(Geometry, PatchifyShapes) {
  Image<float> a(380), b(224);
  EXPECT_EQ(patchify(a, 10).rows(), 1444u);
  EXPECT_EQ(patchify(a, 10).cols(), 300u);
  EXPECT_EQ(patchify(b, 14).rows(), 256u);
  EXPECT_EQ(patchify(b, 14).cols(), 588u);
  EXPECT_THROW(patchify(a, 14), DimensionError);
  EXPECT_THROW(patchify(b, 380, 10), DimensionError);
}

TEST(Geometry, PatchifyRoundTrip) {
  Rng rng(1);
  for (int patch : {1, 2, 5, 10}) {
    const auto img = random_image(patch * 4, rng);
    EXPECT_EQ(unpatchify(patchify(img, patch), patch), img);
  }
}

TEST(Geometry, PatchRowOrderIsRasterScan) {
  Image<double> img(4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y, 0) = y * 4 + x;
  const auto p = patchify(img, 2);
  // second patch is the top-right 2x2 block
  EXPECT_EQ(p(1, 0), 2.0);
  EXPECT_EQ(p(1, 1), 3.0);
  EXPECT_EQ(p(1, 2), 6.0);
  EXPECT_EQ(p(1, 3), 7.0);
}

TEST(Geometry, PixelStandardisation) {
  Raster r(1, 1, Rgb{0, 255, 128});
  const auto img = to_image<double>(r);
  EXPECT_DOUBLE_EQ(img.data[0], -2.0);
  EXPECT_DOUBLE_EQ(img.data[1], 2.0);
  EXPECT_NEAR(img.data[2], (128.0 / 255.0 - 0.5) / 0.25, 1e-15);
  EXPECT_THROW(to_image<double>(Raster(4, 5)), DimensionError);
}

TEST(ParamCount, ClosedFormMatchesEnumeration) {
  for (const auto& cfg : {tiny(), tiny(30, 10), EncoderConfig{24, 4, 3, 12, 3, 3.5, 3},
                          EncoderConfig{14, 7, 1, 6, 1, 1.0, 3}}) {
    EncoderModel<float> m(cfg);
    EXPECT_EQ(static_cast<std::int64_t>(m.params().element_count()), param_count(cfg));
  }
}

TEST(ParamCount, BlockFormula) {
  const auto cfg = EncoderConfig{24, 4, 3, 12, 3, 3.5, 3};
  EncoderModel<float> m(cfg);
  std::size_t n = 0;
  for (const auto& p : m.params())
    if (p.name.rfind("blocks.0.", 0) == 0) n += p.value.size();
  EXPECT_EQ(static_cast<std::int64_t>(n), block_param_count(cfg));
}

TEST(ParamCount, LargeTrunkNearOnePointOneBillion) {
  const double n = static_cast<double>(param_count(vit_g10_380()));
  EXPECT_LT(std::abs(n - 1.1e9) / 1.1e9, 0.10) << n;
  // the trunk without position rows does not depend on tile size
  EXPECT_EQ(param_count(vit_g10_380()) - param_count(vit_g14_224()),
            static_cast<std::int64_t>(1444 - 256) * 1408 + (300 - 588) * 1408);
}

TEST(PosEmbed, EqualGridIsIdentity) {
  Rng rng(2);
  nn::Tensor2D<double> t(17, 5);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  EXPECT_EQ(interpolate_pos_embed(t, 4), t);
}

TEST(PosEmbed, ConstantFieldStaysConstant) {
  nn::Tensor2D<double> t(5, 3, 0.7);
  for (std::size_t c = 0; c < 3; ++c) t(0, c) = -1.0;
  for (int g : {1, 3, 5, 38}) {
    const auto out = interpolate_pos_embed(t, g);
    ASSERT_EQ(out.rows(), static_cast<std::size_t>(g * g + 1));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(0, c), -1.0);
    for (std::size_t i = 3; i < out.size(); ++i) EXPECT_EQ(out[i], 0.7);
  }
}

TEST(PosEmbed, CornersAndCentre) {
  // 2x2 grid with values 0,1,2,3 resampled to 3x3: corners exact, centre is the mean.
  nn::Tensor2D<double> t{{9}, {0}, {1}, {2}, {3}};
  const auto out = interpolate_pos_embed(t, 3);
  EXPECT_EQ(out(0, 0), 9.0);
  EXPECT_EQ(out(1, 0), 0.0);
  EXPECT_EQ(out(3, 0), 1.0);
  EXPECT_EQ(out(7, 0), 2.0);
  EXPECT_EQ(out(9, 0), 3.0);
  EXPECT_DOUBLE_EQ(out(5, 0), 1.5);
  EXPECT_DOUBLE_EQ(interpolate_pos_embed(t, 1)(1, 0), 1.5);
}

TEST(PosEmbed, LinearFieldIsReproduced) {
  const int gs = 22, gt = 38;
  nn::Tensor2D<double> t(gs * gs + 1, 1);
  for (int y = 0; y < gs; ++y)
    for (int x = 0; x < gs; ++x) t(1 + y * gs + x, 0) = 2.0 * x / (gs - 1) - 3.0 * y / (gs - 1);
  const auto out = interpolate_pos_embed(t, gt);
  for (int y = 0; y < gt; ++y)
    for (int x = 0; x < gt; ++x)
      EXPECT_NEAR(out(1 + y * gt + x, 0), 2.0 * x / (gt - 1) - 3.0 * y / (gt - 1), 1e-12);
}

TEST(PosEmbed, BackwardIsAdjoint) {
  Rng rng(5);
  for (auto [gs, gt] : {std::pair{3, 5}, {5, 3}, {4, 4}, {2, 1}}) {
    nn::Tensor2D<double> x(gs * gs + 1, 2), y(gt * gt + 1, 2);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
    const auto mx = interpolate_pos_embed(x, gt);
    nn::Tensor2D<double> mty(x.rows(), 2);
    interpolate_pos_embed_backward(y, gs, mty);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += mx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * mty[i];
    EXPECT_NEAR(lhs, rhs, 1e-12) << gs << "->" << gt;
  }
}

TEST(PosEmbed, NonSquareTableRejected) {
  EXPECT_THROW(interpolate_pos_embed(nn::Tensor2D<double>(6, 2), 2), DimensionError);
}

TEST(Encoder, OutputWidthAndDeterminism) {
  Rng rng(3);
  const auto r = random_raster(20, 20, rng);
  EncoderModel<double> a(tiny(), 11), b(tiny(), 11), c(tiny(), 12);
  const auto ea = a.encode(r);
  EXPECT_EQ(ea.size(), 8u);
  EXPECT_EQ(ea, b.encode(r));
  EXPECT_NE(ea, c.encode(r));
  for (double v : ea) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, InitialisationFollowsRoles) {
  EncoderModel<double> m(tiny(), 4);
  for (const auto& p : m.params()) {
    const bool norm = p.name.find("norm") != std::string::npos;
    const bool bias = p.name.size() > 5 && p.name.substr(p.name.size() - 5) == ".bias";
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (norm && !bias) EXPECT_EQ(p.value[i], 1.0) << p.name;
      else if (bias) EXPECT_EQ(p.value[i], 0.0) << p.name;
      else EXPECT_LE(std::abs(p.value[i]), 0.04 + 1e-12) << p.name;
    }
  }
}

TEST(Encoder, IndivisibleInputIsGeometryError) {
  EncoderModel<double> m(tiny(), 1);
  Rng rng(1);
  EXPECT_THROW(m.encode(random_raster(21, 21, rng)), DimensionError);
  EXPECT_THROW(m.encode(random_raster(20, 25, rng)), DimensionError);
}

TEST(Encoder, AcceptsOtherGridsThroughInterpolation) {
  EncoderModel<double> m(tiny(), 1);
  Rng rng(1);
  EXPECT_EQ(m.encode(random_raster(35, 35, rng)).size(), 8u);
}

TEST(Encoder, BatchRowsMatchSingleCalls) {
  EncoderModel<double> m(tiny(), 2);
  Rng rng(6);
  std::vector<Image<double>> imgs{random_image(20, rng), random_image(20, rng), random_image(20, rng)};
  const auto out = m.encode_batch(imgs);
  ASSERT_EQ(out.rows(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto e = m.encode(imgs[i]);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out(i, c), e[c]);
  }
}

TEST(Encoder, FullBackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    EncoderModel<double> m(tiny(10, 5), seed);
    Rng rng(seed + 50);
    nn::randomize_for_check(m.params(), rng, 0.5);
    const auto img = random_image(10, rng);
    std::vector<double> probe(8);
    for (auto& v : probe) v = rng.normal();
    auto loss = [&](nn::ParamSet<double>&) {
      typename EncoderModel<double>::Cache cache;
      const auto e = m.forward(img, cache);
      m.backward(cache, probe);
      double s = 0;
      for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * probe[i];
      return s;
    };
    nn::GradCheckOptions opt;
    opt.max_entries_per_param = 6;
    opt.seed = seed;
    const auto rep = nn::grad_check(m.params(), loss, opt);
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param << "[" << rep.worst_index << "]";
  }
}

TEST(Encoder, BackwardThroughInterpolatedPositions) {
  EncoderModel<double> m(tiny(10, 5), 9);
  Rng rng(9);
  nn::randomize_for_check(m.params(), rng, 0.5);
  const auto img = random_image(15, rng);
  std::vector<double> probe(8);
  for (auto& v : probe) v = rng.normal();
  auto loss = [&](nn::ParamSet<double>&) {
    typename EncoderModel<double>::Cache cache;
    const auto e = m.forward(img, cache);
    m.backward(cache, probe);
    double s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * probe[i];
    return s;
  };
  nn::GradCheckOptions opt;
  opt.max_entries_per_param = 4;
  const auto rep = nn::grad_check(m.params(), loss, opt);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param;
}

TEST(Encoder, ResampleKeepsOtherParameters) {
  EncoderModel<double> m(tiny(10, 5), 3);
  const auto before = m.params();
  m.resample_position_grid(20);
  EXPECT_EQ(m.config().tile_px, 20);
  EXPECT_EQ(m.pos_grid(), 4);
  for (const auto& p : before) {
    if (p.name == "pos_embed") continue;
    EXPECT_EQ(m.params()[p.name].value, p.value) << p.name;
  }
  EXPECT_THROW(m.resample_position_grid(23), ConfigError);
}

TEST(Encoder, FloatTracksDouble) {
  EncoderModel<double> md(tiny(), 8);
  const auto mf = convert_model<float>(md);
  Rng rng(8);
  const auto r = random_raster(20, 20, rng);
  const auto ed = md.encode(r);
  const auto ef = mf.encode(r);
  for (std::size_t i = 0; i < ed.size(); ++i) EXPECT_NEAR(ef[i], ed[i], 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  EncoderModel<float> m(tiny(), 21);
  const auto path = temp_path("enc.ckpt");
  save_encoder(path, m);
  const auto back = load_encoder<float>(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_TRUE(back.params().values_equal(m.params()));
  Rng rng(2);
  const auto r = random_raster(20, 20, rng);
  EXPECT_EQ(back.encode(r), m.encode(r));
}

TEST(Checkpoint, RejectsCorruptBytes) {
  EncoderModel<float> m(tiny(), 1);
  auto bytes = ckpt::serialize(encoder_checkpoint(m));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(ckpt::deserialize(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    ckpt::deserialize(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(ckpt::deserialize(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(ckpt::deserialize(trailing), FormatError);
}

TEST(Checkpoint, ShapeMismatchIsDataError) {
  EncoderModel<float> m(tiny(), 1);
  auto ck = encoder_checkpoint(m);
  ck.config["encoder"]["width"] = 12;
  ck.config["encoder"]["heads"] = 3;
  EXPECT_THROW(encoder_from_checkpoint<float>(ck), DataError);
}

TEST(Checkpoint, MissingFileIsNotFound) {
  EXPECT_THROW(load_encoder<float>(temp_path("absent.ckpt")), DataError);
}
