#pragma once

#include <cstdint>
#include <vector>

#include "stmg/gatnet.hpp"
#include "stmg/graph.hpp"
#include "stmg/losses.hpp"
#include "stmg/metrics.hpp"
#include "stmg/render.hpp"
#include "stmg/synthdata.hpp"

namespace stmg {

/// Network and refiner configuration plus every trainable tensor.
struct Model {
  NetworkConfig net;
  RefinerConfig refiner;
  ParamStore params;

  bool operator==(const Model&) const = default;
};

Model init_model(const NetworkConfig& net, const RefinerConfig& refiner, std::uint64_t seed);

/// Which terms enter the objective.
enum class Objective { Full, BceOnly };

StmgGraph scene_graph(const SceneSequence& scene);
NodeInputs scene_inputs(const SceneSequence& scene, const StmgGraph& graph);

struct LossBreakdown {
  double total = 0.0;
  double saliency = 0.0;
  double sound = 0.0;
  double bce = 0.0;
  double att = 0.0;
  double kl = 0.0;
  double nss = 0.0;
  double cc = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double c) const;
};

struct SceneForward {
  StmgOutputs net;
  Var probs;                // p(voiced) of every face node, then every visual node
  std::vector<int> labels;  // aligned with probs
  Var alpha_pre;            // head-averaged self-attention of the attention record
  Tensor alpha_gt;          // aligned with alpha_pre
  std::vector<Var> saliency;
  Var bce, att, sound, kl, nss, cc, saliency_term, total;
  Var objective;            // total, or bce for Objective::BceOnly

  LossBreakdown breakdown() const;
};

/// scene -> graph -> STMG network -> rendered saliency -> every loss term.
SceneForward scene_forward(Tape& tape, const SceneSequence& scene, const Model& model, const ParamVars& params,
                           const LossWeights& weights, Objective objective = Objective::Full);

/// Everything the evaluator and renderer need from one scene, as plain values.
struct ScenePrediction {
  std::vector<NodeClass> faces;   // aligned with face_nodes
  std::vector<NodeId> face_nodes;
  std::vector<NodeClass> visual;  // per frame
  std::vector<Tensor> saliency;   // per frame
  std::vector<Tensor> sound_map;  // per frame
};

/// Throws DimensionError when the scene's feature widths do not match the model.
void check_compatible(const SceneSequence& scene, const Model& model);

ScenePrediction predict_scene(const SceneSequence& scene, const Model& model);

/// Ground-truth sound map: the boxes of the faces speaking at t.
Tensor truth_sound_map(const SceneSequence& scene, std::size_t t);

SceneEval evaluate_scene(const SceneSequence& scene, const ScenePrediction& pred, std::size_t* excluded_frames = nullptr,
                         double binarize_threshold = kDefaultBinarizeThreshold);

/// Detection items of one scene (face nodes only).
std::vector<DetectionItem> detection_items(const SceneSequence& scene, const ScenePrediction& pred);

}  // namespace stmg
