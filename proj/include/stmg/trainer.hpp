#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stmg/adam.hpp"
#include "stmg/config.hpp"
#include "stmg/pipeline.hpp"

namespace stmg {

/// Forward, backward and one Adam update over a batch. The gradient is the
/// mean of the per-scene objectives. Only `model.params` and `state` change.
/// Throws NonFiniteError naming the scene whose loss or gradient is not finite.
LossBreakdown train_step(const std::vector<const SceneSequence*>& batch, Model& model, AdamState& state,
                         const TrainConfig& cfg, Objective objective = Objective::Full);

struct EpochLog {
  std::size_t epoch = 0;
  bool warmup = false;
  std::size_t steps = 0;
  LossBreakdown loss;  // mean over the epoch's steps
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Full schedule: warm-up epochs on the BCE term, then the total loss.
/// Scenes are reshuffled every epoch from the training seed.
TrainResult train_model(const std::vector<SceneSequence>& scenes, const RunConfig& cfg,
                        const EpochCallback& on_epoch = {});

/// SHA-1 of `bytes` framed as a git blob ("blob <size>\0" prefix), lowercase hex.
std::string git_blob_hash(const std::string& bytes);

/// Hash over named inputs, independent of their order: a blob hash of the
/// sorted "<blob hash> <name>\n" lines.
std::string content_hash(std::vector<std::pair<std::string, std::string>> named_inputs);

struct RunManifest {
  nlohmann::json config;
  std::string input_hash;
  std::string checkpoint_hash;
  std::vector<EpochLog> log;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

RunManifest make_manifest(const RunConfig& cfg, const std::string& input_hash, const TrainResult& result,
                          const std::string& checkpoint_bytes);

}  // namespace stmg
