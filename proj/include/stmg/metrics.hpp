#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stmg/geometry.hpp"
#include "stmg/synthdata.hpp"
#include "stmg/tensor.hpp"

namespace stmg {

/// Judd AUC: fixated cells are positives, every other cell a negative; the
/// ROC area equals the Mann-Whitney statistic with ties counted as 1/2.
double auc_judd(const Tensor& saliency, const std::vector<Fixation>& fixations);

struct SaliencyScores {
  double auc = 0.0;
  double nss = 0.0;
  double cc = 0.0;
  double kl = 0.0;
  std::size_t frames = 0;
  /// Frames whose NSS or CC was undefined (constant map) and left out of those means.
  std::size_t excluded = 0;
};

/// Per-frame AUC, NSS, CC and KL averaged over frames. NSS here is the mean
/// z-score over the frame's fixations.
SaliencyScores saliency_metrics(const std::vector<Tensor>& saliency, const std::vector<Tensor>& density,
                                const std::vector<std::vector<Fixation>>& fixations);

/// |Y and M| / |Y or M| over binary maps; 0 when both are empty.
double iou(const Tensor& predicted, const Tensor& truth);

/// Area under IoU(binarize(M, tau), Y) for tau on an even grid of `thresholds`
/// points over [0, 1], trapezoidal.
double auc_s(const Tensor& map, const Tensor& truth, std::size_t thresholds = 101);

/// Interpolated (all-point) average precision of the positive class. Items
/// with equal confidence are ranked as one group. Throws ContractError when
/// there are no positives.
double average_precision(const std::vector<double>& confidence, const std::vector<int>& labels);

struct DetectionItem {
  int predicted = 0;
  double confidence = 0.0;
  int label = 0;
};

struct DetectionScores {
  double accuracy = 0.0;
  double map = 0.0;
  std::size_t videos_without_positives = 0;
};

/// Accuracy and AP per video, then averaged over videos. Videos without a
/// positive label are left out of the mAP mean.
DetectionScores detection_scores(const std::vector<std::vector<DetectionItem>>& videos);

/// Box intersection over union.
double mean_overlap(const BoundingBox& a, const BoundingBox& b);

/// One scene's evaluation record.
struct SceneEval {
  std::string id;
  double auc = 0.0, nss = 0.0, cc = 0.0, kl = 0.0;
  double iou = 0.0, auc_s = 0.0;
  double accuracy = 0.0, ap = 0.0;
  bool has_ap = false;
  std::size_t iou_frames = 0;
};

struct EvalReport {
  std::vector<SceneEval> scenes;
  SceneEval aggregate;
  std::size_t excluded_saliency_frames = 0;

  /// Stable key=value text, one line per scene then the aggregate.
  std::string to_text() const;
};

/// Aggregate means over scenes (AP only over scenes that have it).
SceneEval aggregate_scenes(const std::vector<SceneEval>& scenes);

}  // namespace stmg
