#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "stmg/adam.hpp"
#include "stmg/checkpoint.hpp"
#include "stmg/config.hpp"
#include "stmg/error.hpp"
#include "stmg/report.hpp"
#include "stmg/trainer.hpp"
#include "support.hpp"

using namespace stmg;

namespace {

RunConfig small_run() {
  RunConfig cfg;
  cfg.generator.faces = 2;
  cfg.generator.frames = 4;
  cfg.generator.width = 16;
  cfg.generator.height = 12;
  cfg.generator.face_dim = 8;
  cfg.generator.visual_dim = 6;
  cfg.generator.audio_dim = 6;
  cfg.generator.subjects = 8;
  cfg.generator.turn_min = 1;
  cfg.generator.turn_max = 3;
  cfg.network.face_dim = 8;
  cfg.network.visual_dim = 6;
  cfg.network.audio_dim = 6;
  cfg.network.embed_dim = 8;
  cfg.train.clip_frames = 4;
  cfg.train.batch_size = 2;
  cfg.train.epochs = 2;
  cfg.scenes = 6;
  return cfg;
}

std::vector<SceneSequence> scenes_for(const RunConfig& cfg) {
  std::vector<SceneSequence> out;
  for (std::size_t i = 0; i < cfg.scenes; ++i) out.push_back(generate_scene(cfg.generator, i));
  return out;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore params{{"w", Tensor::vector({1.0, -2.0, 0.5})}};
  const ParamStore grads{{"w", Tensor::vector({0.3, -4.0, 0.0})}};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_update(params, grads, state, cfg);
  EXPECT_EQ(state.step, 1u);
  // After bias correction m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(params["w"][0], 1.0 - 0.1 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(params["w"][1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_EQ(params["w"][2], 0.5);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  ParamStore params{{"w", Tensor::scalar(0.0)}};
  AdamState state;
  const AdamConfig cfg;
  adam_update(params, {{"w", Tensor::scalar(1.0)}}, state, cfg);
  adam_update(params, {{"w", Tensor::scalar(-2.0)}}, state, cfg);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0, v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double first = -1e-3 * 1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(params["w"][0], first - 1e-3 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
}

TEST(Adam, RejectsUnknownAndMisshapen) {
  ParamStore params{{"w", Tensor::scalar(0.0)}};
  AdamState state;
  EXPECT_THROW(adam_update(params, {{"x", Tensor::scalar(1.0)}}, state, AdamConfig{}), ContractError);
  EXPECT_THROW(adam_update(params, {{"w", Tensor::vector({1, 2})}}, state, AdamConfig{}), DimensionError);
  AdamConfig bad;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  const RunConfig cfg = small_run();
  const auto scenes = scenes_for(cfg);
  Model model = init_model(cfg.network, cfg.refiner, 1);
  const Model before = model;
  TrainConfig tc = cfg.train;
  tc.adam.lr = 0.0;
  AdamState state;
  const LossBreakdown l = train_step({&scenes[0], &scenes[1]}, model, state, tc);
  EXPECT_EQ(model, before);
  EXPECT_TRUE(std::isfinite(l.total));
}

TEST(TrainStep, RepeatedBatchLossDecreases) {
  const RunConfig cfg = small_run();
  const auto scenes = scenes_for(cfg);
  Model model = init_model(cfg.network, cfg.refiner, 2);
  AdamState state;
  std::vector<double> window_means;
  double acc = 0.0;
  for (int step = 1; step <= 200; ++step) {
    acc += train_step({&scenes[0], &scenes[1]}, model, state, cfg.train).total;
    if (step % 20 == 0) {
      window_means.push_back(acc / 20.0);
      acc = 0.0;
    }
  }
  for (std::size_t w = 1; w < window_means.size(); ++w)
    EXPECT_LT(window_means[w], window_means[w - 1]) << "window " << w;
}

TEST(TrainStep, NonFiniteInputNamesScene) {
  const RunConfig cfg = small_run();
  auto scenes = scenes_for(cfg);
  scenes[0].faces[0].features[0] = std::numeric_limits<double>::quiet_NaN();
  Model model = init_model(cfg.network, cfg.refiner, 1);
  AdamState state;
  try {
    train_step({&scenes[0]}, model, state, cfg.train);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find(scenes[0].id), std::string::npos);
  }
}

TEST(TrainStep, WrongClipLengthIsRejected) {
  RunConfig cfg = small_run();
  const auto scenes = scenes_for(cfg);
  Model model = init_model(cfg.network, cfg.refiner, 1);
  AdamState state;
  cfg.train.clip_frames = 5;
  EXPECT_THROW(train_step({&scenes[0]}, model, state, cfg.train), ContractError);
}

TEST(TrainModel, IdenticalSeedsIdenticalTraces) {
  const RunConfig cfg = small_run();
  const auto scenes = scenes_for(cfg);
  std::string trace_a, trace_b;
  const TrainResult a = train_model(scenes, cfg, [&](const EpochLog& l) { trace_a += format_epoch(l); });
  const TrainResult b = train_model(scenes, cfg, [&](const EpochLog& l) { trace_b += format_epoch(l); });
  EXPECT_EQ(trace_a, trace_b);
  EXPECT_EQ(encode_checkpoint(a.model), encode_checkpoint(b.model));
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_TRUE(a.log[0].warmup);
  EXPECT_FALSE(a.log[1].warmup);
  EXPECT_EQ(a.log[0].steps, 3u);

  RunConfig other = cfg;
  other.train.seed = 99;
  EXPECT_NE(encode_checkpoint(train_model(scenes, other).model), encode_checkpoint(a.model));
}

TEST(Hashing, GitBlobHash) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(content_hash({{"a", "1"}, {"b", "2"}}), content_hash({{"b", "2"}, {"a", "1"}}));
  EXPECT_NE(content_hash({{"a", "1"}, {"b", "2"}}), content_hash({{"a", "2"}, {"b", "1"}}));
}

TEST(Checkpoint, RoundTripAndShapeCheck) {
  const RunConfig cfg = small_run();
  const Model m = init_model(cfg.network, cfg.refiner, 4);
  const std::string bytes = encode_checkpoint(m);
  EXPECT_EQ(decode_checkpoint(bytes), m);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);

  Model broken = m;
  broken.params.begin()->second = Tensor({1});
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(broken)), DimensionError);
  Model extra = m;
  extra.params["stray"] = Tensor({1});
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(extra)), DimensionError);
}

TEST(Config, JsonRoundTrip) {
  RunConfig cfg = small_run();
  cfg.train.loss.literal_sum = true;
  cfg.generator.on_target_fraction = 0.6;
  const RunConfig back = run_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.train, cfg.train);
  EXPECT_EQ(back.network, cfg.network);
}

TEST(Config, ErrorsNameSectionAndField) {
  auto message = [](const nlohmann::json& j) {
    try {
      run_config_from_json(j).validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message({{"train", {{"lr", "fast"}}}}).find("train.lr"), std::string::npos);
  EXPECT_NE(message({{"network", {{"depth", 3}}}}).find("network.depth: unknown field"), std::string::npos);
  EXPECT_NE(message({{"generator", {{"frames", -3}}}}).find("generator.frames"), std::string::npos);
  EXPECT_NE(message({{"train", {{"clip_frames", 7}}}}).find("clip_frames"), std::string::npos);
}

TEST(Config, LoadPrefixesPath) {
  stmg::testing::TempDir dir("cfg");
  const std::string path = dir / "bad.json";
  std::ofstream(path) << R"({"train": {"batch_size": 0}})";
  try {
    load_run_config(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(path), std::string::npos);
    EXPECT_NE(what.find("batch_size"), std::string::npos);
  }
}

TEST(Manifest, JsonRoundTrip) {
  const RunConfig cfg = small_run();
  TrainResult r{init_model(cfg.network, cfg.refiner, 1), {{0, true, 3, {1, 2, 3, 4, 5, 6, 7, 8}}}};
  const RunManifest m = make_manifest(cfg, "abc", r, "bytes");
  EXPECT_EQ(m.checkpoint_hash, git_blob_hash("bytes"));
  const RunManifest back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
}
