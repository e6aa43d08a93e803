#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sonardn/config.hpp"
#include "sonardn/study.hpp"

using namespace sonardn;

namespace {

TomlTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Data;
}

}  // namespace

TEST(Toml, ScalarsTablesAndComments) {
  const auto t = parse(
      "seed = 42 # trailing\n"
      "\n"
      "[train]\n"
      "learning_rate = 3e-4\n"
      "steps_per_epoch = 1_000\n"
      "gamma_schedule = \"ramp\"\n"
      "[study]\n"
      "patch_sizes = [32, 48]\n"
      "flag = true\n");
  EXPECT_EQ(t.at("seed").as_int("seed"), 42);
  EXPECT_DOUBLE_EQ(t.at("train.learning_rate").as_number("x"), 3e-4);
  EXPECT_EQ(t.at("train.steps_per_epoch").as_int("x"), 1000);
  EXPECT_EQ(t.at("train.gamma_schedule").as_string("x"), "ramp");
  ASSERT_EQ(t.at("study.patch_sizes").array.size(), 2u);
  EXPECT_EQ(t.at("study.patch_sizes").array[1].as_int("x"), 48);
  EXPECT_TRUE(t.at("study.flag").as_bool("x"));
}

TEST(Toml, StringEscapes) {
  const auto t = parse("s = \"a\\\"b\\\\c\\td\"\n");
  EXPECT_EQ(t.at("s").as_string("s"), "a\"b\\c\td");
}

TEST(Toml, MalformedInputIsUsageError) {
  for (const char* bad : {"x = \n", "[t\n", "x 1\n", "x = 1 2\n", "x = 1\nx = 2\n", "x = \"open\n"})
    EXPECT_EQ(kind_of([&] { parse(bad); }), ErrorKind::Usage) << bad;
}

TEST(RunConfigToml, AppliesKnownKeys) {
  RunConfig cfg;
  apply_toml(cfg, parse(
                      "seed = 7\njobs = 2\n"
                      "[model]\nlevels = 2\nchannels = 8\n"
                      "[train]\nsplit_ratio = 0.8\ngamma_schedule = \"ramp\"\n"
                      "[matching]\nrecall_mode = \"correspondences\"\nmax_shift = 8\n"
                      "[ga]\noutcome = \"precision\"\n"
                      "[study]\nmodels = 5\npatch_sizes = [32]\n"
                      "[baselines]\nspecs = [\"median:k=5\"]\n"));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.jobs, 2);
  EXPECT_EQ(cfg.arch.levels, 2);
  EXPECT_EQ(cfg.arch.baseChannels, 8);
  EXPECT_DOUBLE_EQ(cfg.train.splitRatio, 0.8);
  EXPECT_EQ(cfg.train.schedule, GammaSchedule::LinearRamp);
  EXPECT_EQ(cfg.matching.recallMode, RecallMode::Correspondences);
  EXPECT_EQ(cfg.matching.maxShift, 8);
  EXPECT_EQ(cfg.ga.outcome, Outcome::Precision);
  EXPECT_EQ(cfg.study.models, 5);
  ASSERT_EQ(cfg.baselines.size(), 1u);
  EXPECT_EQ(cfg.baselines[0].to_string(), "median:k=5");
  cfg.validate();
}

TEST(RunConfigToml, UnknownKeyAndBadTypesRejected) {
  RunConfig cfg;
  EXPECT_EQ(kind_of([&] { apply_toml(cfg, parse("[train]\nepochz = 3\n")); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([&] { apply_toml(cfg, parse("[train]\nepochs = \"3\"\n")); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([&] { apply_toml(cfg, parse("seed = -1\n")); }), ErrorKind::Usage);
}

TEST(RunConfigToml, ValidateCatchesRanges) {
  RunConfig cfg;
  cfg.train.splitRatio = 0.4;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Usage);
  cfg = RunConfig{};
  cfg.study.lrMin = 0.0;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Usage);
  cfg = RunConfig{};
  cfg.ga.elitism = cfg.ga.population + 1;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Usage);
}

TEST(Split, SizesAndDeterminism) {
  const auto a = split_dataset(16, 0.75, 3);
  EXPECT_EQ(a.train.size(), 12u);
  EXPECT_EQ(a.test.size(), 4u);
  EXPECT_FALSE(a.emptyTest);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 16u);
  const auto b = split_dataset(16, 0.75, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.train, split_dataset(16, 0.75, 4).train);
}

TEST(Split, FullRatioFlagsEmptyTest) {
  const auto s = split_dataset(5, 1.0, 0);
  EXPECT_EQ(s.train.size(), 5u);
  EXPECT_TRUE(s.emptyTest);
  EXPECT_EQ(split_dataset(10, 0.55, 0).train.size(), 6u);
  EXPECT_EQ(kind_of([] { split_dataset(10, 0.3, 0); }), ErrorKind::Usage);
}

TEST(Files, ListImagesSkipsMasksAndSorts) {
  const auto dir = std::filesystem::temp_directory_path() / "sonardn_list_images";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  for (const char* n : {"b.png", "a.pgm", "a.mask.png", "notes.txt"}) std::ofstream(dir / n) << "x";
  const auto files = list_images(dir);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.pgm");
  EXPECT_EQ(files[1].filename(), "b.png");
  std::filesystem::remove_all(dir);
}

TEST(Study, ModelDrawsStayInRange) {
  StudyConfig sc;
  std::set<int> patches, epochs;
  for (int i = 0; i < 200; ++i) {
    const auto m = draw_model(sc, 11, i);
    EXPECT_GE(m.learningRate, sc.lrMin);
    EXPECT_LE(m.learningRate, sc.lrMax);
    EXPECT_GE(m.gamma, sc.gammaMin);
    EXPECT_LE(m.gamma, sc.gammaMax);
    epochs.insert(m.epochs);
    patches.insert(m.patchSize);
  }
  EXPECT_EQ(epochs, (std::set<int>{1, 2, 3, 4}));
  EXPECT_EQ(patches, (std::set<int>{32, 48, 64}));
  EXPECT_EQ(draw_model(sc, 11, 5).learningRate, draw_model(sc, 11, 5).learningRate);
  EXPECT_EQ(draw_model(sc, 11, 5).id, "model_005");
}

TEST(Study, TilesCoverImage) {
  std::vector<ImageF> imgs{ImageF(128, 128), ImageF(96, 64)};
  const auto tiles = tile_images(imgs, 64);
  EXPECT_EQ(tiles.size(), 9u + 2u);
  for (const auto& t : tiles) EXPECT_EQ(t.width(), 64);
}

TEST(Study, SyntheticDataIsSeeded) {
  RunConfig cfg;
  cfg.study.syntheticImages = 8;
  cfg.study.imageSize = 96;
  cfg.matching.pairs = 2;
  cfg.seed = 5;
  const auto a = prepare_study_data(cfg), b = prepare_study_data(cfg);
  EXPECT_TRUE(a.synthetic);
  EXPECT_EQ(a.train.size(), 6u);
  EXPECT_EQ(a.test.size(), 2u);
  ASSERT_EQ(a.pairs.size(), 2u);
  EXPECT_EQ(a.pairs[1].imgB.data(), b.pairs[1].imgB.data());
  EXPECT_EQ(a.pairs[1].tx, b.pairs[1].tx);
}
