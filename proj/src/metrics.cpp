#include "stmg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "stmg/error.hpp"
#include "stmg/losses.hpp"
#include "stmg/render.hpp"

namespace stmg {

double auc_judd(const Tensor& saliency, const std::vector<Fixation>& fixations) {
  const std::size_t w = saliency.cols(), n = saliency.size();
  std::vector<std::uint8_t> positive(n, 0);
  for (const Fixation& f : fixations) {
    const std::size_t idx = static_cast<std::size_t>(f.row) * w + static_cast<std::size_t>(f.col);
    if (f.col < 0 || f.row < 0 || static_cast<std::size_t>(f.col) >= w || idx >= n)
      throw RangeError("auc: fixation outside the map");
    positive[idx] = 1;
  }
  const std::size_t pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw ContractError("auc: need at least one fixated and one non-fixated cell");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return saliency[a] < saliency[b]; });
  // Rank sum of the positives, ties sharing their average rank (ranks doubled to stay integral).
  double doubled_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && saliency[order[j]] == saliency[order[i]]) ++j;
    const double doubled_rank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) doubled_rank_sum += doubled_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (0.5 * doubled_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

SaliencyScores saliency_metrics(const std::vector<Tensor>& saliency, const std::vector<Tensor>& density,
                                const std::vector<std::vector<Fixation>>& fixations) {
  if (saliency.size() != density.size() || saliency.size() != fixations.size())
    throw ContractError("saliency_metrics: inputs cover different frame counts");
  if (saliency.empty()) throw ContractError("saliency_metrics: no frames");
  SaliencyScores out;
  std::size_t defined = 0;
  for (std::size_t t = 0; t < saliency.size(); ++t) {
    if (fixations[t].empty()) throw ContractError("saliency_metrics: frame without fixations");
    const GridSpec grid{saliency[t].cols(), saliency[t].rows()};
    out.auc += auc_judd(saliency[t], fixations[t]);
    out.kl += kl_kernel(saliency[t], density[t]);
    try {
      const Tensor p = fixation_map(fixations[t], grid);
      const double nss = nss_kernel(saliency[t], p) / p.sum();
      const double cc = cc_kernel(saliency[t], density[t]);
      out.nss += nss;
      out.cc += cc;
      ++defined;
    } catch (const DegenerateError&) {
      ++out.excluded;
    }
  }
  out.frames = saliency.size();
  out.auc /= static_cast<double>(out.frames);
  out.kl /= static_cast<double>(out.frames);
  if (defined > 0) {
    out.nss /= static_cast<double>(defined);
    out.cc /= static_cast<double>(defined);
  }
  return out;
}

double iou(const Tensor& predicted, const Tensor& truth) {
  if (predicted.shape() != truth.shape()) throw DimensionError("iou: maps differ in shape");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool a = predicted[i] != 0.0, b = truth[i] != 0.0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double auc_s(const Tensor& map, const Tensor& truth, std::size_t thresholds) {
  if (thresholds < 2) throw ContractError("auc_s: need at least two thresholds");
  std::vector<double> curve(thresholds);
  for (std::size_t k = 0; k < thresholds; ++k) {
    const double tau = static_cast<double>(k) / static_cast<double>(thresholds - 1);
    curve[k] = iou(binarize(map, tau), truth);
  }
  double area = 0.0;
  for (std::size_t k = 1; k < thresholds; ++k) area += 0.5 * (curve[k - 1] + curve[k]);
  return area / static_cast<double>(thresholds - 1);
}

double average_precision(const std::vector<double>& confidence, const std::vector<int>& labels) {
  if (confidence.size() != labels.size()) throw DimensionError("average_precision: one label per confidence");
  const std::size_t n = labels.size();
  const std::size_t positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; }));
  if (positives == 0) throw ContractError("average_precision: no positive items");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return confidence[a] > confidence[b]; });

  std::vector<double> recall, precision;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && confidence[order[j]] == confidence[order[i]]) {
      tp += labels[order[j]] != 0;
      ++j;
    }
    seen = j;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev) * precision[k];
    prev = recall[k];
  }
  return ap;
}

DetectionScores detection_scores(const std::vector<std::vector<DetectionItem>>& videos) {
  if (videos.empty()) throw ContractError("detection_scores: no videos");
  DetectionScores out;
  std::size_t with_positives = 0;
  for (const auto& items : videos) {
    if (items.empty()) throw ContractError("detection_scores: empty video");
    std::size_t correct = 0;
    std::vector<double> conf;
    std::vector<int> labels;
    for (const DetectionItem& it : items) {
      correct += it.predicted == it.label;
      conf.push_back(it.confidence);
      labels.push_back(it.label);
    }
    out.accuracy += static_cast<double>(correct) / static_cast<double>(items.size());
    if (std::any_of(labels.begin(), labels.end(), [](int y) { return y != 0; })) {
      out.map += average_precision(conf, labels);
      ++with_positives;
    } else {
      ++out.videos_without_positives;
    }
  }
  out.accuracy /= static_cast<double>(videos.size());
  if (with_positives > 0) out.map /= static_cast<double>(with_positives);
  return out;
}

double mean_overlap(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) throw DegenerateError("mean_overlap: boxes must have positive extent");
  const double inter = intersection_area(a, b);
  return inter / (a.area() + b.area() - inter);
}

SceneEval aggregate_scenes(const std::vector<SceneEval>& scenes) {
  SceneEval agg;
  agg.id = "aggregate";
  if (scenes.empty()) return agg;
  std::size_t with_ap = 0;
  for (const SceneEval& s : scenes) {
    agg.auc += s.auc;
    agg.nss += s.nss;
    agg.cc += s.cc;
    agg.kl += s.kl;
    agg.iou += s.iou;
    agg.auc_s += s.auc_s;
    agg.accuracy += s.accuracy;
    agg.iou_frames += s.iou_frames;
    if (s.has_ap) {
      agg.ap += s.ap;
      ++with_ap;
    }
  }
  const double n = static_cast<double>(scenes.size());
  agg.auc /= n;
  agg.nss /= n;
  agg.cc /= n;
  agg.kl /= n;
  agg.iou /= n;
  agg.auc_s /= n;
  agg.accuracy /= n;
  agg.has_ap = with_ap > 0;
  if (with_ap > 0) agg.ap /= static_cast<double>(with_ap);
  return agg;
}

std::string EvalReport::to_text() const {
  auto line = [](const SceneEval& s) {
    return fmt::format("scene={} auc={:.6f} nss={:.6f} cc={:.6f} kl={:.6f} iou={:.6f} auc_s={:.6f} acc={:.6f} map={}\n",
                       s.id, s.auc, s.nss, s.cc, s.kl, s.iou, s.auc_s, s.accuracy,
                       s.has_ap ? fmt::format("{:.6f}", s.ap) : std::string("na"));
  };
  std::string out;
  for (const SceneEval& s : scenes) out += line(s);
  out += line(aggregate);
  out += fmt::format("excluded_saliency_frames={}\n", excluded_saliency_frames);
  return out;
}

}  // namespace stmg
