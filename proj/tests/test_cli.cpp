#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "stmg/cli.hpp"
#include "stmg/container.hpp"
#include "stmg/error.hpp"
#include "support.hpp"

using namespace stmg;
using stmg::testing::run;
using stmg::testing::TempDir;

namespace fs = std::filesystem;

namespace {

constexpr const char* kSmallConfig = R"({
  "generator": {"faces": 2, "frames": 4, "width": 16, "height": 12, "face_dim": 8, "visual_dim": 6,
                "audio_dim": 6, "subjects": 8, "turn_min": 1, "turn_max": 3},
  "scenes": 4,
  "network": {"face_dim": 8, "visual_dim": 6, "audio_dim": 6, "embed_dim": 8},
  "train": {"clip_frames": 4, "batch_size": 2, "epochs": 2}
})";

std::string write_text(const TempDir& dir, const std::string& name, const std::string& text) {
  const std::string path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  const auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("unknown command 'frobnicate'"), std::string::npos);
  EXPECT_EQ(run({"train"}).code, 2);
  EXPECT_EQ(run({"gen-data", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, BadConfigNamesPathAndField) {
  TempDir dir("cli_cfg");
  const std::string path = write_text(dir, "bad.json", R"({"generator": {"faces": "three"}})");
  const auto r = run({"gen-data", "--config", path, "--out", dir / "data"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(path), std::string::npos);
  EXPECT_NE(r.err.find("generator.faces"), std::string::npos);
  EXPECT_EQ(run({"gen-data", "--config", dir / "missing.json"}).code, 1);
}

TEST(Cli, GenDataIsDeterministic) {
  TempDir dir("cli_gen");
  const std::string cfg = write_text(dir, "small.json", kSmallConfig);
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--seed", "1", "--out", dir / "a"}).code, 0);
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--seed", "1", "--out", dir / "b"}).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const std::string name = e.path().filename().string();
    EXPECT_EQ(read_file(e.path().string()), read_file(dir / ("b/" + name))) << name;
    ++files;
  }
  EXPECT_EQ(files, 4u);
}

TEST(Cli, TrainEvalRenderReplay) {
  TempDir dir("cli_run");
  const std::string cfg = write_text(dir, "small.json", kSmallConfig);
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", dir / "data"}).code, 0);
  const auto train = run({"train", "--config", cfg, "--data", dir / "data", "--out", dir / "run"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("epoch=0 warmup=1 steps=2 "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "run/model.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run/manifest.json"));

  const auto eval = run({"eval", "--checkpoint", dir / "run/model.ckpt", "--data", dir / "data", "--out", dir / "report.txt"});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_EQ(read_file(dir / "report.txt"), eval.out);
  EXPECT_NE(eval.out.find("scene=aggregate"), std::string::npos);

  const auto render = run({"render", "--checkpoint", dir / "run/model.ckpt", "--scene", dir / "data/scene_0000.mvs",
                           "--out", dir / "maps"});
  ASSERT_EQ(render.code, 0) << render.err;
  EXPECT_TRUE(fs::exists(dir / "maps/saliency_003.pgm"));
  EXPECT_TRUE(fs::exists(dir / "maps/sound_000.pgm"));
  const Container maps = decode_container(read_file(dir / "maps/maps.mvs"), "mvs-1");
  EXPECT_EQ(maps.tensors.at("saliency").shape(), (Shape{4, 12, 16}));

  const auto replay = run({"train", "--replay", dir / "run/manifest.json", "--data", dir / "data", "--out", dir / "run2"});
  EXPECT_EQ(replay.code, 0) << replay.err;
  EXPECT_NE(replay.out.find("replay=identical"), std::string::npos);
  EXPECT_EQ(read_file(dir / "run/model.ckpt"), read_file(dir / "run2/model.ckpt"));
}

TEST(Cli, EvalWithMismatchedDimensions) {
  TempDir dir("cli_dims");
  const std::string cfg = write_text(dir, "small.json", kSmallConfig);
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", dir / "data"}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--data", dir / "data", "--out", dir / "run", "--epochs", "1"}).code, 0);
  ASSERT_EQ(run({"gen-data", "--count", "2", "--out", dir / "wide"}).code, 0);
  const auto r = run({"eval", "--checkpoint", dir / "run/model.ckpt", "--data", dir / "wide"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dimension"), std::string::npos);
}

TEST(Cli, MissingDataDirectory) {
  const auto r = run({"train", "--data", "/nonexistent/stmg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/stmg"), std::string::npos);
}

TEST(Cli, AnalyzeFromConfig) {
  const auto r = run({"analyze", "--count", "2", "--trials", "2", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("scenes=2\n"), std::string::npos);
  EXPECT_NE(r.out.find("same_face="), std::string::npos);
  EXPECT_EQ(r.out, run({"analyze", "--count", "2", "--trials", "2", "--seed", "3"}).out);
}

TEST(Cli, GradCheckSeedSeven) {
  const auto r = run({"grad-check", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("grad-check passed"), std::string::npos);
}

TEST(ParallelFor, EachIndexOnce) {
  std::vector<std::atomic<int>> hits(97);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw RangeError("boom");
  }), RangeError);
  EXPECT_GE(worker_count(), 1u);
}
