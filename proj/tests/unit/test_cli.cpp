#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "canvoi/cli/app.hpp"

using namespace canvoi;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("canvoi_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  const auto p = dir / name;
  io::write_text_atomic(p, j.dump());
  return p.string();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Bags whose first embedding column carries the label, three groups.
void write_separable_store(const fs::path& path, int per_group) {
  wsi::EmbeddingStoreWriter w(path);
  Rng rng(3);
  for (int g = 0; g < 3; ++g)
    for (int i = 0; i < per_group; ++i) {
      wsi::EmbeddingBag b;
      b.slide_id = fmt::format("s{}_{}", g, i);
      b.group_id = fmt::format("g{}", g);
      b.label = i % 2;
      const auto n = static_cast<std::size_t>(rng.uniform_int(3, 6));
      b.embeddings = nn::Tensor2D<float>(n, 4);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < 4; ++c) b.embeddings(r, c) = static_cast<float>(rng.uniform(-1, 1));
        b.embeddings(r, 0) += *b.label ? 3.0f : -3.0f;
        b.origins.push_back({static_cast<int>(r), 0});
      }
      w.write(b);
    }
  w.close();
}

const nlohmann::json kFastTrain = {{"lr", 1e-2}, {"epochs", 4}, {"hidden", 8}};

nlohmann::json small_synth() {
  return {{"n_slides", 6}, {"width", 320}, {"height", 320}, {"blob_count", 3}, {"blob_radius_min", 60.0},
          {"blob_radius_max", 120.0}};
}

}  // namespace

TEST(Cli, UsageErrors) {
  auto r = run({});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("canvoi: error=usage reason=\"", 0), 0u);
  EXPECT_EQ(line_count(r.err), 1u);
  EXPECT_EQ(run({"flops", "--precision", "f16"}).code, 1);
  EXPECT_EQ(run({"flops", "--bogus"}).code, 1);
  EXPECT_EQ(run({"flops", "--help"}).code, 0);
}

TEST(Cli, ConfigErrors) {
  const auto dir = scratch("config_errors");
  auto r = run({"flops", "--config", (dir / "absent.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error=config"), std::string::npos);
  const auto bad = write_config(dir, "bad.json", {{"mpp", 0.5}, {"colour", 1}});
  r = run({"flops", "--config", bad, "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key 'colour'"), std::string::npos);
  io::write_text_atomic(dir / "broken.json", "{");
  EXPECT_EQ(run({"flops", "--config", (dir / "broken.json").string(), "--out", (dir / "o").string()}).code, 1);
}

TEST(Cli, FlopsPresetsGiveFiveRows) {
  const auto dir = scratch("flops");
  const auto r = run({"flops", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = io::read_text(dir / "tradeoff.csv");
  EXPECT_EQ(line_count(csv), 6u);
  EXPECT_TRUE(fs::exists(dir / "tradeoff.svg"));
  const auto resolved = nlohmann::json::parse(io::read_text(dir / "resolved_config.json"));
  EXPECT_EQ(resolved.at("command"), "flops");
  EXPECT_EQ(resolved.at("config").at("convention").at("fma_flops"), 2);
}

TEST(Cli, FlopsGeometryFileRelativeToConfig) {
  const auto dir = scratch("flops_file");
  io::write_text_atomic(dir / "g.json", R"({"geometries":[{"name":"a","tile_px":40,"patch_px":10,"depth":1,
    "width":8,"heads":2,"mlp_hidden":16}]})");
  const auto cfg = write_config(dir, "c.json", {{"geometries", "g.json"}});
  ASSERT_EQ(run({"flops", "--config", cfg, "--out", (dir / "o").string()}).code, 0);
  EXPECT_EQ(line_count(io::read_text(dir / "o" / "tradeoff.csv")), 2u);
  const auto missing = write_config(dir, "m.json", {{"geometries", "nope.json"}});
  EXPECT_EQ(run({"flops", "--config", missing, "--out", (dir / "o2").string()}).code, 2);
}

TEST(Cli, SynthAndTileAreDeterministic) {
  const auto dir = scratch("synth");
  const auto cfg = write_config(dir, "s.json", small_synth());
  for (const char* o : {"a", "b"}) ASSERT_EQ(run({"synth", "--config", cfg, "--seed", "4", "--out", (dir / o).string()}).code, 0);
  EXPECT_EQ(io::read_text(dir / "a" / "manifest.jsonl"), io::read_text(dir / "b" / "manifest.jsonl"));
  EXPECT_EQ(io::read_file(dir / "a" / "slides" / "slide_005.ppm"), io::read_file(dir / "b" / "slides" / "slide_005.ppm"));
  const auto records = wsi::read_manifest(dir / "a" / "manifest.jsonl");
  ASSERT_EQ(records.size(), 6u);
  EXPECT_EQ(records[3].label, 1);
  EXPECT_EQ(records[3].group_id, "site1");
  EXPECT_EQ(nlohmann::json::parse(io::read_text(dir / "a" / "resolved_config.json")).at("config").at("seed"), 4);

  ASSERT_EQ(run({"synth", "--config", cfg, "--seed", "5", "--out", (dir / "c").string()}).code, 0);
  EXPECT_NE(io::read_file(dir / "a" / "slides" / "slide_005.ppm"), io::read_file(dir / "c" / "slides" / "slide_005.ppm"));

  const auto tcfg = write_config(dir, "t.json", {{"manifest", "a/manifest.jsonl"}, {"tile_px", 80}});
  ASSERT_EQ(run({"tile", "--config", tcfg, "--out", (dir / "t").string()}).code, 0);
  EXPECT_EQ(line_count(io::read_text(dir / "t" / "tile_stats.csv")), 7u);
}

TEST(Cli, MissingSlideIsDataError) {
  const auto dir = scratch("missing_slide");
  io::write_text_atomic(dir / "m.jsonl", R"({"slide_id":"x","path":"x.ppm","mpp":0.5,"group_id":"g","label":0})"
                                         "\n");
  const auto cfg = write_config(dir, "t.json", {{"manifest", "m.jsonl"}});
  const auto r = run({"tile", "--config", cfg, "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error=data"), std::string::npos);
}

TEST(Cli, PretrainEmbedChain) {
  const auto dir = scratch("chain");
  ASSERT_EQ(run({"synth", "--config", write_config(dir, "s.json", small_synth()), "--out", (dir / "s").string()}).code, 0);
  const nlohmann::json pre = {
      {"manifest", "s/manifest.jsonl"},
      {"max_sources", 4},
      {"pretrain",
       {{"encoder", {{"tile_px", 40}, {"patch_px", 10}, {"depth", 1}, {"width", 16}, {"heads", 2}, {"mlp_ratio", 2.0}}},
        {"head", {{"bottleneck", 8}, {"prototypes", 16}}},
        {"crops", {{"source_px", 80}, {"local_px", 20}, {"n_local", 2}}},
        {"phases", {{{"global_px", 40}, {"steps", 3}}}}}}};
  const auto pcfg = write_config(dir, "p.json", pre);
  for (const char* o : {"p1", "p2"}) {
    const auto r = run({"pretrain", "--config", pcfg, "--seed", "2", "--out", (dir / o).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(io::read_file(dir / "p1" / "encoder.ckpt"), io::read_file(dir / "p2" / "encoder.ckpt"));
  EXPECT_EQ(line_count(io::read_text(dir / "p1" / "loss.csv")), 4u);
  EXPECT_EQ(line_count(io::read_text(dir / "p1" / "sources.csv")), 5u);

  const auto ecfg = write_config(dir, "e.json", {{"manifest", "s/manifest.jsonl"}, {"checkpoint", "p1/encoder.ckpt"}});
  for (const char* o : {"e1", "e2"}) {
    const auto r = run({"embed", "--config", ecfg, "--out", (dir / o).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(io::read_file(dir / "e1" / "embeddings.cvoi"), io::read_file(dir / "e2" / "embeddings.cvoi"));
  wsi::EmbeddingStoreReader reader(dir / "e1" / "embeddings.cvoi");
  const auto skipped = io::read_text(dir / "e1" / "skipped.csv");
  EXPECT_EQ(reader.size() + line_count(skipped) - 1, 6u);
  for (auto& bag : reader.read_all()) {
    EXPECT_EQ(bag.width(), 16u);
    EXPECT_GT(bag.size(), 0u);
  }

  const auto bad = write_config(dir, "b.json", {{"manifest", "s/manifest.jsonl"}, {"checkpoint", "p1/encoder.ckpt"},
                                               {"tile_px", 45}});
  EXPECT_EQ(run({"embed", "--config", bad, "--out", (dir / "e3").string()}).code, 1);
}

TEST(Cli, MilEvalAndMissingScores) {
  const auto dir = scratch("mil");
  write_separable_store(dir / "store.cvoi", 8);
  const auto mcfg = write_config(dir, "m.json", {{"store", "store.cvoi"}, {"folds", 3}, {"train", kFastTrain}});
  ASSERT_EQ(run({"mil", "--config", mcfg, "--seed", "1", "--out", (dir / "m").string()}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "m" / "models" / "g1_fold2.ckpt"));
  EXPECT_EQ(line_count(io::read_text(dir / "m" / "train_log.csv")), 1u + 3 * 3 * 4);

  const auto ecfg = write_config(dir, "e.json", {{"store", "store.cvoi"}, {"models", "m"}});
  for (const char* o : {"e1", "e2"}) {
    const auto r = run({"eval", "--config", ecfg, "--out", (dir / o).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(io::read_text(dir / "e1" / "report.json"), io::read_text(dir / "e2" / "report.json"));
  const auto report = nlohmann::json::parse(io::read_text(dir / "e1" / "report.json"));
  EXPECT_GE(report.at("averaged_auc").get<double>(), 0.95);
  EXPECT_EQ(report.at("tasks")[0].at("n_slides"), 24);
  // 3 groups x 8 slides x (3 fold models + ensemble)
  EXPECT_EQ(line_count(io::read_text(dir / "e1" / "scores.csv")), 1u + 24 * 4);

  const auto vcfg = write_config(dir, "v.json", {{"store", "store.cvoi"}, {"models", "m"}, {"zscore_pool", "validation"}});
  EXPECT_EQ(run({"eval", "--config", vcfg, "--out", (dir / "ev").string()}).code, 0);

  auto plan = nlohmann::json::parse(io::read_text(dir / "m" / "plan.json"));
  plan["iterations"][1]["test"].erase(0);
  io::write_text_atomic(dir / "m" / "plan.json", plan.dump());
  const auto r = run({"eval", "--config", ecfg, "--out", (dir / "e3").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing scores"), std::string::npos) << r.err;

  fs::remove(dir / "m" / "models" / "g0_fold0.ckpt");
  EXPECT_EQ(run({"eval", "--config", ecfg, "--out", (dir / "e4").string()}).code, 2);
}

TEST(Cli, SweepCurve) {
  const auto dir = scratch("sweep");
  write_separable_store(dir / "store.cvoi", 10);
  const auto cfg = write_config(dir, "s.json",
                                {{"store", "store.cvoi"}, {"fractions", {0.3, 1.0, 0.5}}, {"folds", 2}, {"train", kFastTrain}});
  const auto r = run({"sweep", "--config", cfg, "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(io::read_text(dir / "o" / "curve.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "fraction,train_size,averaged_auc");
  std::vector<double> fractions, sizes;
  while (std::getline(csv, line)) {
    double f = 0, n = 0, a = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &f, &n, &a), 3);
    fractions.push_back(f);
    sizes.push_back(n);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  EXPECT_EQ(fractions, (std::vector<double>{1.0, 0.5, 0.3}));
  ASSERT_EQ(sizes.size(), 3u);
  EXPECT_GE(sizes[0], sizes[1]);
  EXPECT_GE(sizes[1], sizes[2]);
  EXPECT_TRUE(fs::exists(dir / "o" / "curve.svg"));
  EXPECT_EQ(run({"sweep", "--config", write_config(dir, "bad.json", {{"store", "store.cvoi"}, {"fractions", {0.0}}}),
                 "--out", (dir / "o2").string()})
                .code,
            1);
}
