#include "stmg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <openssl/sha.h>

#include "stmg/error.hpp"
#include "stmg/random.hpp"

namespace stmg {

LossBreakdown train_step(const std::vector<const SceneSequence*>& batch, Model& model, AdamState& state,
                         const TrainConfig& cfg, Objective objective) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const double share = 1.0 / static_cast<double>(batch.size());
  ParamStore grads;
  LossBreakdown total;
  for (const SceneSequence* scene : batch) {
    if (scene->frames != cfg.clip_frames)
      throw ContractError("train_step: scene " + scene->id + " has " + std::to_string(scene->frames) +
                          " frames, config expects " + std::to_string(cfg.clip_frames));
    Tape tape;
    const ParamVars vars = bind_params(tape, model.params, true);
    const SceneForward f = scene_forward(tape, *scene, model, vars, cfg.loss, objective);
    const LossBreakdown b = f.breakdown();
    if (!std::isfinite(f.objective.value()[0]) || !std::isfinite(b.total))
      throw NonFiniteError(fmt::format("non-finite loss in scene {}: total={} bce={} att={} kl={} nss={} cc={}",
                                       scene->id, b.total, b.bce, b.att, b.kl, b.nss, b.cc));
    tape.backward(f.objective);
    for (const auto& [name, v] : vars) {
      Tensor g = tape.grad(v);
      if (!g.all_finite()) throw NonFiniteError("non-finite gradient for '" + name + "' in scene " + scene->id);
      auto [it, fresh] = grads.try_emplace(name, g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += share * g[i];
    }
    total += b.scaled(share);
  }
  adam_update(model.params, grads, state, cfg.adam);
  return total;
}

TrainResult train_model(const std::vector<SceneSequence>& scenes, const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (scenes.empty()) throw ContractError("train_model: no training scenes");
  TrainResult r{init_model(cfg.network, cfg.refiner, cfg.train.seed), {}};
  AdamState state;
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(cfg.train.seed, 1000 + epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);

    EpochLog log;
    log.epoch = epoch;
    log.warmup = epoch < cfg.train.warmup_epochs;
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
      std::vector<const SceneSequence*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.train.batch_size); ++i)
        batch.push_back(&scenes[order[i]]);
      log.loss += train_step(batch, r.model, state, cfg.train, log.warmup ? Objective::BceOnly : Objective::Full);
      ++log.steps;
    }
    log.loss = log.loss.scaled(1.0 / static_cast<double>(log.steps));
    if (on_epoch) on_epoch(log);
    r.log.push_back(log);
  }
  return r;
}

std::string git_blob_hash(const std::string& bytes) {
  const std::string framed = "blob " + std::to_string(bytes.size()) + std::string(1, '\0') + bytes;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(framed.data()), framed.size(), digest);
  std::string hex;
  for (unsigned char c : digest) hex += fmt::format("{:02x}", c);
  return hex;
}

std::string content_hash(std::vector<std::pair<std::string, std::string>> named_inputs) {
  std::vector<std::string> lines;
  for (const auto& [name, bytes] : named_inputs) lines.push_back(git_blob_hash(bytes) + " " + name + "\n");
  std::sort(lines.begin(), lines.end());
  return git_blob_hash(std::accumulate(lines.begin(), lines.end(), std::string()));
}

namespace {

nlohmann::json loss_json(const LossBreakdown& b) {
  return {{"total", b.total}, {"saliency", b.saliency}, {"sound", b.sound}, {"bce", b.bce},
          {"att", b.att},     {"kl", b.kl},             {"nss", b.nss},     {"cc", b.cc}};
}

LossBreakdown loss_from_json(const nlohmann::json& j) {
  return {j.at("total").get<double>(), j.at("saliency").get<double>(), j.at("sound").get<double>(),
          j.at("bce").get<double>(),   j.at("att").get<double>(),      j.at("kl").get<double>(),
          j.at("nss").get<double>(),   j.at("cc").get<double>()};
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochLog& e : log)
    epochs.push_back({{"epoch", e.epoch}, {"warmup", e.warmup}, {"steps", e.steps}, {"loss", loss_json(e.loss)}});
  return {{"kind", "run-manifest"},
          {"config", config},
          {"input_hash", input_hash},
          {"checkpoint_hash", checkpoint_hash},
          {"epochs", epochs}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.config = j.at("config");
    m.input_hash = j.at("input_hash").get<std::string>();
    m.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    for (const auto& e : j.at("epochs"))
      m.log.push_back({e.at("epoch").get<std::size_t>(), e.at("warmup").get<bool>(), e.at("steps").get<std::size_t>(),
                       loss_from_json(e.at("loss"))});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

RunManifest make_manifest(const RunConfig& cfg, const std::string& input_hash, const TrainResult& result,
                          const std::string& checkpoint_bytes) {
  return {stmg::to_json(cfg), input_hash, git_blob_hash(checkpoint_bytes), result.log};
}

}  // namespace stmg
