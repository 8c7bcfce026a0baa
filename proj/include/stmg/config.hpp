#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "stmg/adam.hpp"
#include "stmg/gatnet.hpp"
#include "stmg/losses.hpp"
#include "stmg/render.hpp"
#include "stmg/synthdata.hpp"

namespace stmg {

struct TrainConfig {
  /// Clip length T; every training scene must have exactly this many frames.
  std::size_t clip_frames = 10;
  std::size_t batch_size = 8;
  AdamConfig adam;
  LossWeights loss;
  std::size_t epochs = 5;
  /// Leading epochs trained on the BCE term alone.
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 1;
  std::string checkpoint = "model.ckpt";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// One run: dataset generation, model shape and training schedule.
struct RunConfig {
  GeneratorConfig generator;
  /// Scenes generated by gen-data.
  std::size_t scenes = 200;
  NetworkConfig network;
  RefinerConfig refiner;
  TrainConfig train;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const NetworkConfig& c);
nlohmann::json to_json(const RefinerConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

// Parsers start from the defaults, accept any subset of fields and reject
// unknown ones. Errors are ConfigError("<section>.<field>: <message>").
GeneratorConfig generator_from_json(const nlohmann::json& j);
NetworkConfig network_from_json(const nlohmann::json& j);
RefinerConfig refiner_from_json(const nlohmann::json& j);
TrainConfig train_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Reads and validates a config file; errors are prefixed with the path.
RunConfig load_run_config(const std::string& path);

}  // namespace stmg
