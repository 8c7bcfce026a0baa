#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "stmg/error.hpp"
#include "stmg/losses.hpp"
#include "stmg/metrics.hpp"
#include "stmg/render.hpp"
#include "support.hpp"

using namespace stmg;
using stmg::testing::random_tensor;

namespace {

double pair_count_auc(const Tensor& s, const std::vector<Fixation>& fix) {
  std::vector<std::uint8_t> pos(s.size(), 0);
  for (const Fixation& f : fix) pos[static_cast<std::size_t>(f.row) * s.cols() + static_cast<std::size_t>(f.col)] = 1;
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

// Precision/recall at every threshold "confidence >= tau", then the area under
// the interpolated curve p(r) = max precision at recall >= r.
double brute_force_ap(const std::vector<double>& conf, const std::vector<int>& y) {
  const double positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
  std::vector<std::pair<double, double>> pr;
  for (double tau : std::set<double>(conf.begin(), conf.end())) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < conf.size(); ++i)
      if (conf[i] >= tau) (y[i] ? tp : fp) += 1.0;
    pr.push_back({tp / positives, tp / (tp + fp)});
  }
  std::set<double> recalls;
  for (const auto& [r, p] : pr) recalls.insert(r);
  double ap = 0.0, prev = 0.0;
  for (double r : recalls) {
    double best = 0.0;
    for (const auto& [r2, p2] : pr)
      if (r2 >= r) best = std::max(best, p2);
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

std::vector<Fixation> random_fixations(Rng& rng, std::size_t w, std::size_t h, std::size_t n) {
  std::vector<Fixation> f;
  for (std::size_t i = 0; i < n; ++i)
    f.push_back({static_cast<int>(i), static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(w) - 1)),
                 static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(h) - 1))});
  return f;
}

}  // namespace

TEST(Auc, MatchesPairCountOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor s = random_tensor(rng, {32, 32}, 0.0, 1.0);
    if (trial % 2) for (double& v : s.storage()) v = std::floor(v * 8.0);
    const auto fix = random_fixations(rng, 32, 32, 40);
    EXPECT_NEAR(auc_judd(s, fix), pair_count_auc(s, fix), 1e-12);
  }
}

TEST(Auc, RandomMapsAverageOneHalf) {
  Rng rng(5);
  double acc = 0.0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) acc += auc_judd(random_tensor(rng, {6, 6}, 0.0, 1.0), random_fixations(rng, 6, 6, 4));
  EXPECT_NEAR(acc / trials, 0.5, 0.02);
}

TEST(SaliencyMetrics, PerfectSinglePeak) {
  Tensor g = gaussian2d({4.5, 3.5}, {2.0, 0.0, 0.0, 2.0}, GridSpec{9, 7});
  const double mass = g.sum();
  for (double& v : g.storage()) v /= mass;
  const std::vector<Fixation> at_peak = {{0, 4, 3}};
  const SaliencyScores s = saliency_metrics({g}, {g}, {at_peak});
  EXPECT_DOUBLE_EQ(s.auc, 1.0);
  EXPECT_NEAR(s.cc, 1.0, 1e-12);
  EXPECT_NEAR(s.kl, 0.0, 1e-12);
  EXPECT_EQ(s.excluded, 0u);
}

TEST(SaliencyMetrics, NssIsMeanZScoreAtFixations) {
  Rng rng(2);
  const Tensor s = random_tensor(rng, {5, 5}, 0.0, 1.0);
  const std::vector<Fixation> fix = {{0, 1, 1}, {1, 1, 1}, {2, 3, 4}};
  double mean = 0.0;
  for (double v : s.storage()) mean += v / 25.0;
  double var = 0.0;
  for (double v : s.storage()) var += (v - mean) * (v - mean) / 25.0;
  const double z = (2.0 * (s.at(1, 1) - mean) + (s.at(4, 3) - mean)) / std::sqrt(var) / 3.0;
  Tensor g = s;
  EXPECT_NEAR(saliency_metrics({s}, {g}, {fix}).nss, z, 1e-12);
}

TEST(SaliencyMetrics, ConstantFrameIsExcluded) {
  const Tensor flat({4, 4}, 1.0 / 16.0);
  Tensor peak({4, 4});
  peak[5] = 1.0;
  const SaliencyScores s = saliency_metrics({flat, peak}, {peak, peak}, {{{0, 1, 1}}, {{0, 1, 1}}});
  EXPECT_EQ(s.excluded, 1u);
  EXPECT_EQ(s.frames, 2u);
  EXPECT_NEAR(s.cc, 1.0, 1e-12);
}

TEST(AveragePrecision, MatchesBruteForceEnumeration) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 20));
    std::vector<double> conf;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      conf.push_back(trial % 2 ? std::round(rng.uniform() * 4.0) / 4.0 : rng.uniform());
      y.push_back(rng.bernoulli(0.4));
    }
    y[0] = 1;
    EXPECT_NEAR(average_precision(conf, y), brute_force_ap(conf, y), 1e-12) << "trial " << trial;
  }
}

TEST(AveragePrecision, FiveItemList) {
  // Ranked: +, -, +, -, + gives precisions 1, 2/3, 3/5 at recalls 1/3, 2/3, 1.
  const double ap = average_precision({0.9, 0.8, 0.7, 0.6, 0.5}, {1, 0, 1, 0, 1});
  EXPECT_NEAR(ap, (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0, 1e-12);
  EXPECT_THROW(average_precision({0.1, 0.2}, {0, 0}), ContractError);
}

TEST(DetectionScores, PerfectAndAllWrong) {
  const std::vector<DetectionItem> perfect = {{1, 0.9, 1}, {0, 0.1, 0}, {1, 0.8, 1}};
  const DetectionScores p = detection_scores({perfect});
  EXPECT_EQ(p.accuracy, 1.0);
  EXPECT_EQ(p.map, 1.0);
  const std::vector<DetectionItem> wrong = {{0, 0.1, 1}, {1, 0.9, 0}};
  EXPECT_EQ(detection_scores({wrong}).accuracy, 0.0);
  const DetectionScores mixed = detection_scores({perfect, {{0, 0.2, 0}}});
  EXPECT_EQ(mixed.videos_without_positives, 1u);
  EXPECT_EQ(mixed.map, 1.0);
}

TEST(Iou, Examples) {
  const Tensor a = Tensor::matrix(2, 2, {1, 1, 0, 0});
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, Tensor::matrix(2, 2, {0, 0, 1, 1})), 0.0);
  EXPECT_EQ(iou(Tensor::matrix(2, 2, {1, 0, 0, 0}), a), 0.5);
  EXPECT_EQ(iou(Tensor({2, 2}), Tensor({2, 2})), 0.0);
  EXPECT_THROW(iou(a, Tensor({4})), DimensionError);
}

TEST(Iou, MatchesPixelCount) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a({8, 8}), b({8, 8});
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      a[i] = rng.bernoulli(0.4);
      b[i] = rng.bernoulli(0.4);
      inter += a[i] * b[i];
      uni += std::max(a[i], b[i]);
    }
    EXPECT_NEAR(iou(a, b), inter / uni, 1e-12);
  }
}

TEST(AucS, Examples) {
  const Tensor y = box_mask({{2, 2, 3, 3}}, GridSpec{8, 8});
  EXPECT_NEAR(auc_s(y, y), 1.0, 1e-12);
  EXPECT_EQ(auc_s(Tensor({8, 8}), y), 0.0);
}

TEST(AucS, CoarseSweepMatchesFine) {
  const GridSpec grid{24, 18};
  const Tensor map = sound_source_map({1, 1}, {face_gaussian({2, 2, 8, 8}), face_gaussian({12, 6, 8, 10})}, grid);
  const Tensor y = box_mask({{2, 2, 8, 8}}, grid);
  EXPECT_NEAR(auc_s(map, y, 101), auc_s(map, y, 10001), 0.01);
}

TEST(MeanOverlap, Examples) {
  const BoundingBox a{0, 0, 4, 4};
  EXPECT_EQ(mean_overlap(a, a), 1.0);
  EXPECT_EQ(mean_overlap(a, {10, 10, 2, 2}), 0.0);
  EXPECT_NEAR(mean_overlap(a, {2, 0, 4, 4}), 8.0 / 24.0, 1e-12);
  EXPECT_NEAR(mean_overlap({0.5, 1.0, 3.0, 2.0}, {2.0, 0.0, 3.0, 4.0}), 3.0 / (6.0 + 12.0 - 3.0), 1e-12);
  EXPECT_THROW(mean_overlap(a, {0, 0, 0, 1}), DegenerateError);
}

TEST(EvalReport, TextFormat) {
  SceneEval s;
  s.id = "scene_0000";
  s.auc = 0.5;
  s.has_ap = true;
  s.ap = 0.25;
  SceneEval no_ap = s;
  no_ap.id = "scene_0001";
  no_ap.has_ap = false;
  EvalReport r;
  r.scenes = {s, no_ap};
  r.aggregate = aggregate_scenes(r.scenes);
  EXPECT_EQ(r.aggregate.ap, 0.25);
  const std::string text = r.to_text();
  EXPECT_NE(text.find("scene=scene_0000 auc=0.500000 "), std::string::npos);
  EXPECT_NE(text.find("map=na\n"), std::string::npos);
  EXPECT_NE(text.find("scene=aggregate "), std::string::npos);
  EXPECT_NE(text.find("excluded_saliency_frames=0\n"), std::string::npos);
}
