#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "canvoi/core/rng.hpp"
#include "canvoi/wsi/embedding_store.hpp"
#include "canvoi/wsi/magnification.hpp"
#include "canvoi/wsi/manifest.hpp"
#include "canvoi/wsi/synthetic.hpp"
#include "canvoi/wsi/tiling.hpp"

using namespace canvoi;
using namespace canvoi::wsi;

namespace {

const Rgb kPink{230, 150, 190};
const Rgb kWhite{255, 255, 255};

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "canvoi_test_wsi";
  std::filesystem::create_directories(dir);
  return dir;
}

Raster random_raster(int w, int h, Rng& rng) {
  Raster r(w, h);
  for (auto& v : r.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return r;
}

SlideRaster slide_of(Raster r, double mpp = 0.5) {
  SlideRaster s;
  s.raster = std::move(r);
  s.mpp = mpp;
  s.slide_id = "s";
  return s;
}

EmbeddingBag random_bag(const std::string& id, std::size_t n, std::size_t width, Rng& rng) {
  EmbeddingBag b;
  b.slide_id = id;
  b.group_id = "site" + std::to_string(rng.uniform_int(0, 2));
  b.label = static_cast<int>(rng.uniform_int(0, 1));
  b.embeddings = nn::Tensor2D<float>(n, width);
  for (auto& v : b.embeddings.flat()) v = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < n; ++i) b.origins.push_back({static_cast<int>(i) * 380, 0});
  return b;
}

}  // namespace

TEST(Magnification, TargetIsBitExactIdentity) {
  Rng rng(1);
  const auto s = slide_of(random_raster(37, 23, rng));
  const auto out = normalize_magnification(s);
  EXPECT_EQ(out.raster, s.raster);
  EXPECT_EQ(out.mpp, 0.5);
  EXPECT_EQ(normalize_magnification(out).raster, out.raster);
}

TEST(Magnification, FortyXHalvesEachSide) {
  Rng rng(2);
  const auto s = slide_of(random_raster(100, 60, rng), 0.25);
  const auto out = normalize_magnification(s);
  EXPECT_EQ(out.raster.width(), 50);
  EXPECT_EQ(out.raster.height(), 30);
  // 2x2 block means, recomputed directly
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 50; ++x)
      for (int c = 0; c < 3; ++c) {
        int sum = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) sum += s.raster.px(2 * x + dx, 2 * y + dy)[c];
        EXPECT_EQ(out.raster.px(x, y)[c], to_u8(sum / 4.0));
      }
}

TEST(Magnification, ConstantColourStaysConstant) {
  for (double mpp : {0.25, 0.3, 0.37, 0.5, 0.6, 1.0}) {
    const auto out = normalize_magnification(slide_of(Raster(41, 29, kPink), mpp));
    for (int y = 0; y < out.raster.height(); ++y)
      for (int x = 0; x < out.raster.width(); ++x) ASSERT_EQ(out.raster.at(x, y), kPink) << mpp;
  }
}

TEST(Magnification, UpsamplesCoarseSlides) {
  const auto out = normalize_magnification(slide_of(Raster(10, 8, kPink), 1.0));
  EXPECT_EQ(out.raster.width(), 20);
  EXPECT_EQ(out.raster.height(), 16);
}

TEST(Magnification, InvalidMppRejected) {
  EXPECT_THROW(normalize_magnification(slide_of(Raster(4, 4), 0.0)), ConfigError);
}

TEST(Tissue, WhiteTileScoresZero) {
  EXPECT_EQ(tissue_score(Raster(64, 64, kWhite)), 0.0);
}

TEST(Tissue, UniformPinkScoresColourWeight) {
  const TissueConfig cfg;
  const auto b = tissue_breakdown(Raster(64, 64, kPink), cfg);
  EXPECT_EQ(b.non_background, 1.0);
  EXPECT_EQ(b.edge_density, 0.0);
  EXPECT_DOUBLE_EQ(b.score, cfg.color_weight);
}

TEST(Tissue, SplitTileEdgesFollowBoundary) {
  Raster r(64, 64, kWhite);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) r.set(x, y, kPink);
  const TissueConfig cfg;
  const auto b = tissue_breakdown(r, cfg);
  EXPECT_NEAR(b.non_background, 0.5, 64.0 / (64 * 64));
  const CannyDetector canny(cfg);
  const auto e = canny.edges(r);
  std::size_t count = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (e[static_cast<std::size_t>(y) * 64 + x]) {
        ++count;
        EXPECT_GE(x, 30);
        EXPECT_LE(x, 33);
      }
  EXPECT_GE(count, 64u);
  EXPECT_LE(count, 2u * 64u);
}

TEST(Tissue, ScoreInvariantUnderRotationsAndFlips) {
  Rng rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    SyntheticSpec spec;
    spec.width = spec.height = 96;
    spec.blob_count = 2;
    spec.blob_radius_min = 15;
    spec.blob_radius_max = 40;
    spec.class_id = trial % 2;
    auto r = generate_synthetic_slide(spec, 100 + static_cast<std::uint64_t>(trial)).raster;
    if (trial % 3 == 2) r = random_raster(50, 50, rng);
    const double s = tissue_score(r);
    Raster rot = r;
    for (int k = 0; k < 3; ++k) {
      rot = rotate90(rot);
      EXPECT_EQ(tissue_score(rot), s) << "rotation " << k + 1;
    }
    EXPECT_EQ(tissue_score(flip_horizontal(r)), s);
    EXPECT_EQ(tissue_score(flip_vertical(r)), s);
  }
}

TEST(Tissue, ScoreWithinUnitInterval) {
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const double s = tissue_score(random_raster(40, 40, rng));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Tiling, CandidateCountIsFloorProduct) {
  EXPECT_EQ(candidate_grid(1140, 760, 380).size(), 6u);
  EXPECT_EQ(candidate_grid(1139, 760, 380).size(), 4u);
  EXPECT_EQ(candidate_grid(379, 2000, 380).size(), 0u);
  const auto s = slide_of(Raster(1140, 760, kPink));
  const auto scan = scan_tile_grid(s, 380, TissueConfig{});
  EXPECT_EQ(scan.candidates, 6u);
  EXPECT_EQ(scan.kept.size(), 6u);
}

TEST(Tiling, TilesDisjointInsideBoundsAndRowMajor) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(50, 400));
    const int h = static_cast<int>(rng.uniform_int(50, 400));
    const int t = static_cast<int>(rng.uniform_int(7, 60));
    const auto g = candidate_grid(w, h, t);
    ASSERT_EQ(g.size(), static_cast<std::size_t>((w / t) * (h / t)));
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(w) * h, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_LE(g[i].x + t, w);
      EXPECT_LE(g[i].y + t, h);
      if (i > 0) {
        EXPECT_TRUE(g[i].y > g[i - 1].y || (g[i].y == g[i - 1].y && g[i].x > g[i - 1].x));
      }
      for (int y = g[i].y; y < g[i].y + t; ++y)
        for (int x = g[i].x; x < g[i].x + t; ++x) {
          auto& c = covered[static_cast<std::size_t>(y) * w + x];
          EXPECT_EQ(c, 0);
          c = 1;
        }
    }
  }
}

TEST(Tiling, WhiteSlideSignalsEmpty) {
  const auto s = slide_of(Raster(800, 800, kWhite));
  for (double thr : {1e-9, 0.1, 0.25, 0.9}) EXPECT_THROW(extract_tile_grid(s, 380, thr), EmptySlideError);
}

TEST(Tiling, BlobIsCoveredBySurvivingTile) {
  SyntheticSpec spec;
  spec.width = spec.height = 1140;
  spec.blob_count = 0;  // blank canvas, then one 400 x 400 tissue block
  auto slide = generate_synthetic_slide(spec, 1);
  for (int y = 500; y < 900; ++y)
    for (int x = 300; x < 700; ++x) slide.raster.set(x, y, kPink);
  const auto tiles = extract_tile_grid(slide, 380, 0.1);
  ASSERT_GE(tiles.size(), 1u);
  for (const auto& t : tiles) {
    const bool overlaps = t.origin.x < 700 && t.origin.x + 380 > 300 && t.origin.y < 900 && t.origin.y + 380 > 500;
    EXPECT_TRUE(overlaps);
  }
  // the tile holding most of the blob survives
  bool found = false;
  for (const auto& t : tiles) found = found || (t.origin.x == 380 && t.origin.y == 380);
  EXPECT_TRUE(found);
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.width = spec.height = 300;
  const auto a = generate_synthetic_slide(spec, 9);
  const auto b = generate_synthetic_slide(spec, 9);
  const auto c = generate_synthetic_slide(spec, 10);
  EXPECT_EQ(a.raster, b.raster);
  EXPECT_NE(a.raster, c.raster);
  EXPECT_EQ(a.label, 0);
}

TEST(Synthetic, ClassHueSeparationIsMeasurable) {
  auto mean_hue = [](const Raster& r) {
    double sum = 0;
    std::size_t n = 0;
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) {
        const Rgb c = r.at(x, y);
        if (c == kWhite) continue;
        sum += rgb_to_hsv(c).h;
        ++n;
      }
    return sum / static_cast<double>(n);
  };
  SyntheticSpec a;
  a.width = a.height = 400;
  SyntheticSpec b = a;
  b.class_id = 1;
  const double ha = mean_hue(generate_synthetic_slide(a, 3).raster);
  const double hb = mean_hue(generate_synthetic_slide(b, 3).raster);
  EXPECT_NEAR(ha, a.hue(), 1.5);
  EXPECT_NEAR(hb - ha, a.class_hue_separation, 1.5);
}

TEST(Synthetic, BlobFreeSpecYieldsEmptySlide) {
  SyntheticSpec spec;
  spec.blob_count = 0;
  const auto s = generate_synthetic_slide(spec, 4);
  EXPECT_THROW(extract_tile_grid(s, 380, 0.25), EmptySlideError);
}

TEST(Synthetic, FortyXSlideNormalisesToTwentyXGeometry) {
  SyntheticSpec spec;
  spec.width = spec.height = 760;
  spec.mpp = 0.25;
  const auto s = generate_synthetic_slide(spec, 5);
  EXPECT_EQ(s.raster.width(), 1520);
  const auto n = normalize_magnification(s);
  EXPECT_EQ(n.raster.width(), 760);
  EXPECT_EQ(candidate_grid(n.raster.width(), n.raster.height(), 380).size(), 4u);
}

TEST(Manifest, RoundTripAndUnknownKeys) {
  std::vector<ManifestRecord> recs{{"a", "a.ppm", 0.5, "site0", 1}, {"b", "/x/b.ppm", 0.25, "site1", std::nullopt}};
  const auto path = temp_dir() / "manifest.jsonl";
  write_manifest(path, recs);
  EXPECT_EQ(read_manifest(path), recs);
  EXPECT_EQ(resolve_slide_path(path, recs[0]), temp_dir() / "a.ppm");
  EXPECT_EQ(resolve_slide_path(path, recs[1]), std::filesystem::path("/x/b.ppm"));
  EXPECT_THROW(parse_manifest(R"({"slide_id":"a","path":"p","mpp":0.5,"group_id":"g","colour":1})"), DataError);
  EXPECT_THROW(parse_manifest("{not json"), DataError);
  EXPECT_THROW(parse_manifest(R"({"slide_id":"a","path":"p","mpp":-1,"group_id":"g"})"), DataError);
}

TEST(EmbeddingStore, WriteThenReadIsBitExact) {
  Rng rng(6);
  const auto path = temp_dir() / "roundtrip.cvoi";
  std::filesystem::remove(path);
  auto a = random_bag("slide-a", 5, 16, rng);
  auto b = random_bag("slide-b", 1, 16, rng);
  b.label.reset();
  a.embeddings[3] = -0.0f;
  a.embeddings[4] = std::numeric_limits<float>::denorm_min();
  write_bag(path, a);
  write_bag(path, b);
  EXPECT_EQ(read_bag(path, "slide-a"), a);
  EXPECT_EQ(read_bag(path, "slide-b"), b);
  EXPECT_TRUE(std::signbit(read_bag(path, "slide-a").embeddings[3]));
  EXPECT_THROW(read_bag(path, "slide-c"), NotFoundError);
  EXPECT_THROW(write_bag(path, a), DataError);
}

TEST(EmbeddingStore, ThousandBagsListInInsertionOrder) {
  Rng rng(7);
  const auto path = temp_dir() / "thousand.cvoi";
  std::vector<EmbeddingBag> bags;
  {
    EmbeddingStoreWriter w(path);
    for (int i = 0; i < 1000; ++i) {
      bags.push_back(random_bag("id" + std::to_string((i * 7919) % 1000), 1 + i % 4, 8, rng));
      w.write(bags.back());
    }
  }
  EmbeddingStoreReader r(path);
  const auto ids = r.list();
  ASSERT_EQ(ids.size(), 1000u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 1000u);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(ids[static_cast<std::size_t>(i)], bags[static_cast<std::size_t>(i)].slide_id);
  for (int i : {0, 1, 499, 998, 999}) EXPECT_EQ(r.read(bags[static_cast<std::size_t>(i)].slide_id), bags[static_cast<std::size_t>(i)]);
}

TEST(EmbeddingStore, CorruptionNamesOffset) {
  Rng rng(8);
  const auto path = temp_dir() / "corrupt.cvoi";
  {
    EmbeddingStoreWriter w(path);
    w.write(random_bag("x", 2, 4, rng));
  }
  const auto good = io::read_file(path);

  auto bad = good;
  bad[1] = 'X';
  io::write_file_atomic(path, bad);
  try {
    EmbeddingStoreReader r(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }

  bad = good;
  bad[4] = 2;
  io::write_file_atomic(path, bad);
  try {
    EmbeddingStoreReader r(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }

  bad = good;
  bad.resize(bad.size() - 5);
  io::write_file_atomic(path, bad);
  EXPECT_THROW(EmbeddingStoreReader r(path), FormatError);

  EXPECT_THROW(EmbeddingStoreReader r(temp_dir() / "missing.cvoi"), NotFoundError);
}

TEST(EmbeddingStore, AppendKeepsEarlierBags) {
  Rng rng(9);
  const auto path = temp_dir() / "append.cvoi";
  std::filesystem::remove(path);
  const auto a = random_bag("a", 3, 4, rng);
  const auto b = random_bag("b", 2, 4, rng);
  {
    EmbeddingStoreWriter w(path);
    w.write(a);
  }
  {
    EmbeddingStoreWriter w(path, EmbeddingStoreWriter::Mode::append);
    w.write(b);
  }
  EmbeddingStoreReader r(path);
  EXPECT_EQ(r.list(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(r.read("a"), a);
  EXPECT_EQ(r.read("b"), b);
}
