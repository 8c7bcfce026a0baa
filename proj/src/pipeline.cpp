#include "stmg/pipeline.hpp"

#include "stmg/error.hpp"
#include "stmg/random.hpp"

namespace stmg {

Model init_model(const NetworkConfig& net, const RefinerConfig& refiner, std::uint64_t seed) {
  net.validate();
  refiner.validate();
  Model m{net, refiner, init_network_params(net, Rng::mix(seed, 1))};
  for (auto& [name, t] : init_refiner_params(refiner, Rng::mix(seed, 2))) m.params[name] = std::move(t);
  return m;
}

StmgGraph scene_graph(const SceneSequence& scene) {
  std::vector<std::size_t> firsts;
  for (const FaceTrack& f : scene.faces) firsts.push_back(f.first_frame);
  return StmgGraph(std::move(firsts), scene.frames);
}

NodeInputs scene_inputs(const SceneSequence& scene, const StmgGraph& graph) {
  std::vector<const NodeId*> faces;
  for (const NodeId& n : graph.nodes())
    if (n.kind == NodeKind::Face) faces.push_back(&n);
  NodeInputs in;
  in.face = Tensor({faces.size(), scene.face_dim});
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const FaceTrack& track = scene.faces.at(faces[i]->face);
    const std::size_t row = faces[i]->frame - track.first_frame;
    for (std::size_t j = 0; j < scene.face_dim; ++j) in.face.at(i, j) = track.features.at(row, j);
  }
  in.visual = scene.visual;
  in.audio = scene.audio;
  return in;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  saliency += o.saliency;
  sound += o.sound;
  bce += o.bce;
  att += o.att;
  kl += o.kl;
  nss += o.nss;
  cc += o.cc;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double c) const {
  return {total * c, saliency * c, sound * c, bce * c, att * c, kl * c, nss * c, cc * c};
}

LossBreakdown SceneForward::breakdown() const {
  auto v = [](Var x) { return x.value()[0]; };
  return {v(total), v(saliency_term), v(sound), v(bce), v(att), v(kl), v(nss), v(cc)};
}

namespace {

Var voiced_probability(Var logits) {
  const std::size_t n = logits.value().rows();
  const Var p = reshape(masked_softmax(logits, Mask(n * 2, 1)), {n * 2});
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = 2 * i + 1;
  return take(p, idx);
}

}  // namespace

SceneForward scene_forward(Tape& tape, const SceneSequence& scene, const Model& model, const ParamVars& params,
                           const LossWeights& weights, Objective objective) {
  check_compatible(scene, model);
  const StmgGraph graph = scene_graph(scene);
  SceneForward f;
  f.net = stmg_forward(tape, graph, scene_inputs(scene, graph), params, model.net);

  f.probs = voiced_probability(concat_rows({f.net.face_logits, f.net.visual_logits}));
  for (const NodeId& n : f.net.face_nodes) f.labels.push_back(scene.faces[n.face].speaking_at(n.frame));
  for (std::size_t t = 0; t < scene.frames; ++t) f.labels.push_back(scene.background_voiced.at(t));

  const AttentionRecord& rec = f.net.attention;
  f.alpha_pre = attention_readout(rec);
  const Tensor target = attention_target(scene);
  const std::size_t nf = scene.face_count();
  f.alpha_gt = Tensor({rec.nodes.size()});
  std::vector<std::vector<std::size_t>> frame_slots(scene.frames);
  for (std::size_t k = 0; k < rec.nodes.size(); ++k) {
    const NodeId& n = rec.nodes[k];
    f.alpha_gt[k] = target.at(n.frame, n.kind == NodeKind::Face ? n.face : nf);
    frame_slots.at(n.frame).push_back(k);
  }

  std::vector<Tensor> density, fixmaps;
  for (std::size_t t = 0; t < scene.frames; ++t) {
    const FrameFaces ff = frame_faces(scene, t);
    // Record order within a frame is faces by index then the visual node, matching frame_faces.
    const Var w = take(f.alpha_pre, frame_slots[t]);
    f.saliency.push_back(attention_refine(tape, visual_prior(scene, t), assign_regions(ff.boxes, scene.grid), w,
                                          params, model.refiner));
    density.push_back(scene.density_frame(t));
    fixmaps.push_back(fixation_map(scene.fixations.at(t), scene.grid));
  }

  f.bce = bce_loss(f.probs, f.labels);
  f.att = att_loss(f.alpha_gt, f.alpha_pre);
  f.sound = sound_loss(f.bce, f.att, weights.gamma1);
  f.kl = kl_loss(f.saliency, density);
  f.nss = nss_loss(f.saliency, fixmaps);
  f.cc = cc_loss(f.saliency, density);
  f.saliency_term = saliency_loss(f.kl, f.nss, f.cc, weights);
  f.total = total_loss(f.saliency_term, f.sound, weights.gamma2);
  f.objective = objective == Objective::BceOnly ? f.bce : f.total;
  return f;
}

void check_compatible(const SceneSequence& scene, const Model& model) {
  auto check = [&](const char* what, std::size_t scene_dim, std::size_t model_dim) {
    if (scene_dim != model_dim)
      throw DimensionError(std::string(what) + " dimension mismatch: scene has " + std::to_string(scene_dim) +
                           ", model expects " + std::to_string(model_dim));
  };
  check("face feature", scene.face_dim, model.net.face_dim);
  check("visual feature", scene.visual_dim, model.net.visual_dim);
  check("audio feature", scene.audio_dim, model.net.audio_dim);
}

ScenePrediction predict_scene(const SceneSequence& scene, const Model& model) {
  check_compatible(scene, model);
  Tape tape;
  const ParamVars params = bind_params(tape, model.params, false);
  const StmgGraph graph = scene_graph(scene);
  const StmgOutputs out = stmg_forward(tape, graph, scene_inputs(scene, graph), params, model.net);

  ScenePrediction p;
  p.faces = classify_nodes(out.face_logits.value());
  p.face_nodes = out.face_nodes;
  p.visual = classify_nodes(out.visual_logits.value());
  const auto weights = attention_weights_for_saliency(out.attention, scene.face_count(), scene.frames);
  p.saliency = predict_saliency(scene, weights, model.params, model.refiner);

  std::vector<std::vector<int>> labels(scene.frames, std::vector<int>(scene.face_count(), 0));
  for (std::size_t i = 0; i < p.face_nodes.size(); ++i) labels[p.face_nodes[i].frame][p.face_nodes[i].face] = p.faces[i].label;
  for (std::size_t t = 0; t < scene.frames; ++t) {
    const FrameFaces ff = frame_faces(scene, t);
    std::vector<int> lab;
    std::vector<GaussianParams> gs;
    for (std::size_t k = 0; k < ff.faces.size(); ++k) {
      lab.push_back(labels[t][ff.faces[k]]);
      gs.push_back(face_gaussian(ff.boxes[k]));
    }
    p.sound_map.push_back(sound_source_map(lab, gs, scene.grid));
  }
  return p;
}

Tensor truth_sound_map(const SceneSequence& scene, std::size_t t) {
  std::vector<BoundingBox> boxes;
  for (const FaceTrack& f : scene.faces)
    if (f.speaking_at(t)) boxes.push_back(f.box(t));
  return box_mask(boxes, scene.grid);
}

std::vector<DetectionItem> detection_items(const SceneSequence& scene, const ScenePrediction& pred) {
  std::vector<DetectionItem> items;
  for (std::size_t i = 0; i < pred.face_nodes.size(); ++i) {
    const NodeId& n = pred.face_nodes[i];
    items.push_back({pred.faces[i].label, pred.faces[i].confidence, scene.faces[n.face].speaking_at(n.frame)});
  }
  return items;
}

SceneEval evaluate_scene(const SceneSequence& scene, const ScenePrediction& pred, std::size_t* excluded_frames,
                         double binarize_threshold) {
  SceneEval e;
  e.id = scene.id;
  std::vector<Tensor> density;
  for (std::size_t t = 0; t < scene.frames; ++t) density.push_back(scene.density_frame(t));
  const SaliencyScores s = saliency_metrics(pred.saliency, density, scene.fixations);
  e.auc = s.auc;
  e.nss = s.nss;
  e.cc = s.cc;
  e.kl = s.kl;
  if (excluded_frames) *excluded_frames += s.excluded;

  for (std::size_t t = 0; t < scene.frames; ++t) {
    const Tensor truth = truth_sound_map(scene, t);
    if (truth.sum() == 0.0) continue;
    e.iou += iou(binarize(pred.sound_map[t], binarize_threshold), truth);
    e.auc_s += auc_s(pred.sound_map[t], truth);
    ++e.iou_frames;
  }
  if (e.iou_frames > 0) {
    e.iou /= static_cast<double>(e.iou_frames);
    e.auc_s /= static_cast<double>(e.iou_frames);
  }

  const DetectionScores d = detection_scores({detection_items(scene, pred)});
  e.accuracy = d.accuracy;
  e.has_ap = d.videos_without_positives == 0;
  e.ap = d.map;
  return e;
}

}  // namespace stmg
