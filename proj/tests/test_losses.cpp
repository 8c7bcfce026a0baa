#include <gtest/gtest.h>

#include <cmath>

#include "stmg/error.hpp"
#include "stmg/gradcheck.hpp"
#include "stmg/losses.hpp"
#include "stmg/synthdata.hpp"
#include "support.hpp"

using namespace stmg;
using stmg::testing::random_tensor;

namespace {

double value(Var v) { return v.value().item(); }

Tensor normalized(Tensor t) {
  const double s = t.sum();
  for (double& v : t.storage()) v /= s;
  return t;
}

Var softmax_map(Var logits, std::size_t h, std::size_t w) {
  return reshape(masked_softmax(reshape(logits, {1, h * w}), Mask(h * w, 1)), {h, w});
}

}  // namespace

TEST(Bce, AnalyticValues) {
  Tape tape;
  EXPECT_NEAR(value(bce_loss(tape.constant(Tensor({4}, 0.5)), {0, 1, 1, 0})), std::log(2.0), 1e-12);
  EXPECT_LE(value(bce_loss(tape.constant(Tensor::vector({0, 1, 1})), {0, 1, 1})), 1e-6);
}

TEST(Bce, MatchesDirectSum) {
  Rng rng(4);
  const Tensor p = random_tensor(rng, {9}, 0.01, 0.99);
  std::vector<int> y;
  double direct = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    y.push_back(rng.bernoulli(0.5));
    direct -= y.back() ? std::log(p[i]) : std::log(1.0 - p[i]);
  }
  Tape tape;
  EXPECT_NEAR(value(bce_loss(tape.constant(p), y)), direct / 9.0, 1e-12);
  EXPECT_THROW(bce_loss(tape.constant(p), {1, 0}), DimensionError);
}

TEST(AttLoss, AnalyticValues) {
  Tape tape;
  const Tensor uniform({4}, 0.25);
  EXPECT_NEAR(value(att_loss(Tensor::vector({1, 0, 0, 0}), tape.constant(uniform))), std::log(4.0) / 4.0, 1e-9);
  const Tensor a = Tensor::vector({0.1, 0.6, 0.3});
  EXPECT_NEAR(value(att_loss(a, tape.constant(a))), 0.0, 1e-15);
}

TEST(SoundLoss, LinearInGamma) {
  Tape tape;
  const Var bce = tape.constant(Tensor::scalar(0.7)), att = tape.constant(Tensor::scalar(0.2));
  EXPECT_EQ(value(sound_loss(bce, att, 0.0)), 0.7);
  EXPECT_NEAR(value(sound_loss(bce, att, 0.5)), 0.8, 1e-15);
  EXPECT_NEAR(value(sound_loss(bce, att, 2.0)) - value(sound_loss(bce, att, 1.0)), 0.2, 1e-15);
  const Var zero = tape.constant(Tensor::scalar(0.0));
  EXPECT_EQ(value(sound_loss(zero, zero, 0.5)), 0.0);
}

TEST(KlLoss, AnalyticValues) {
  Tape tape;
  for (std::size_t k : {4u, 16u, 100u}) {
    Tensor onehot({1, k});
    onehot[k / 2] = 1.0;
    const Var uniform = tape.constant(Tensor({1, k}, 1.0 / static_cast<double>(k)));
    EXPECT_NEAR(value(kl_loss({uniform}, {onehot})), std::log(static_cast<double>(k)), 1e-9);
  }
  Rng rng(1);
  const Tensor g = normalized(random_tensor(rng, {5, 6}, 0.0, 1.0));
  EXPECT_NEAR(value(kl_loss({tape.constant(g)}, {g})), 0.0, 1e-15);
}

TEST(KlLoss, MatchesDoubleLoop) {
  Rng rng(2);
  Tape tape;
  std::vector<Var> s;
  std::vector<Tensor> g;
  double direct = 0.0;
  for (int t = 0; t < 3; ++t) {
    Tensor st = normalized(random_tensor(rng, {4, 5}, 0.0, 1.0));
    Tensor gt = normalized(random_tensor(rng, {4, 5}, 0.0, 1.0));
    gt.at(0, 0) = 0.0;
    gt = normalized(gt);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c)
        if (gt.at(r, c) > 0) direct += gt.at(r, c) * std::log(gt.at(r, c) / std::max(st.at(r, c), kLogEps));
    s.push_back(tape.constant(st));
    g.push_back(gt);
  }
  EXPECT_NEAR(value(kl_loss(s, g)), direct / 3.0, 1e-12);
}

TEST(KlLoss, RequiresUnitMass) {
  Tape tape;
  EXPECT_THROW(kl_loss({tape.constant(Tensor({2, 2}, 0.3))}, {Tensor({2, 2}, 0.25)}), ContractError);
}

TEST(NssLoss, TwoByTwoHandComputation) {
  // Mean 1/4, population std sqrt(3)/4, so the peak's z-score is sqrt(3).
  Tape tape;
  const Tensor s = Tensor::matrix(2, 2, {1, 0, 0, 0});
  const Tensor p = Tensor::matrix(2, 2, {1, 0, 0, 0});
  EXPECT_NEAR(value(nss_loss({tape.constant(s)}, {p})), std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(nss_kernel(s, Tensor::matrix(2, 2, {0, 1, 0, 0})), -1.0 / std::sqrt(3.0), 1e-12);
}

TEST(NssLoss, StandardizedMapCountsFixations) {
  // Eight cells holding 2, -2 and six zeros have mean 0 and population std 1.
  const Tensor s = Tensor::matrix(2, 4, {2, -2, 0, 0, 0, 0, 0, 0});
  Tensor p({2, 4});
  p[0] = 3.0;
  Tape tape;
  EXPECT_NEAR(value(nss_loss({tape.constant(s)}, {p})), 2.0 * 3.0, 1e-12);
}

TEST(NssLoss, ConstantMapIsDegenerate) {
  EXPECT_THROW(nss_kernel(Tensor({3, 3}, 0.5), Tensor({3, 3}, 1.0)), DegenerateError);
}

TEST(CcLoss, AffineInvariance) {
  Rng rng(8);
  const Tensor g = random_tensor(rng, {6, 6}, 0.0, 1.0);
  Tensor affine = g, neg = g;
  for (double& v : affine.storage()) v = 3.5 * v + 0.2;
  for (double& v : neg.storage()) v = -v;
  Tape tape;
  EXPECT_NEAR(value(cc_loss({tape.constant(g)}, {g})), 1.0, 1e-12);
  EXPECT_NEAR(value(cc_loss({tape.constant(affine)}, {g})), 1.0, 1e-12);
  EXPECT_NEAR(value(cc_loss({tape.constant(neg)}, {g})), -1.0, 1e-12);
}

TEST(CcLoss, MatchesPearsonFormula) {
  Rng rng(9);
  const Tensor s = random_tensor(rng, {5, 7}), g = random_tensor(rng, {5, 7});
  const double n = 35.0;
  double ms = 0, mg = 0;
  for (std::size_t i = 0; i < 35; ++i) {
    ms += s[i] / n;
    mg += g[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 35; ++i) {
    sxy += (s[i] - ms) * (g[i] - mg);
    sxx += (s[i] - ms) * (s[i] - ms);
    syy += (g[i] - mg) * (g[i] - mg);
  }
  EXPECT_NEAR(cc_kernel(s, g), sxy / std::sqrt(sxx * syy), 1e-12);
}

TEST(SaliencyLoss, Combination) {
  Tape tape;
  const Var kl = tape.constant(Tensor::scalar(0.4)), nss = tape.constant(Tensor::scalar(2.0)),
            cc = tape.constant(Tensor::scalar(0.5));
  LossWeights w;
  EXPECT_NEAR(value(saliency_loss(kl, nss, cc, w)), 0.4 - 0.2 - 0.5, 1e-15);
  w.literal_sum = true;
  EXPECT_NEAR(value(saliency_loss(kl, nss, cc, w)), 0.4 + 0.2 + 0.5, 1e-15);
  LossWeights zero;
  zero.beta1 = zero.beta2 = 0.0;
  EXPECT_EQ(value(saliency_loss(kl, nss, cc, zero)), 0.4);
  const Var sound = tape.constant(Tensor::scalar(0.3));
  EXPECT_EQ(value(total_loss(kl, sound, 0.0)), 0.4);
  EXPECT_NEAR(value(total_loss(kl, sound, 2.0)), 1.0, 1e-15);
}

TEST(SaliencyLoss, PerfectPrediction) {
  Rng rng(3);
  const Tensor g = normalized(random_tensor(rng, {4, 4}, 0.0, 1.0));
  Tensor p({4, 4});
  p[5] = 1.0;
  Tape tape;
  const Var s = tape.constant(g);
  const Var total = saliency_loss(kl_loss({s}, {g}), nss_loss({s}, {p}), cc_loss({s}, {g}), LossWeights{});
  EXPECT_NEAR(value(total), -0.1 * nss_kernel(g, p) - 1.0, 1e-12);
}

TEST(LossGradients, MatchFiniteDifferences) {
  Rng rng(21);
  const std::size_t h = 4, w = 5;
  const Tensor g = normalized(random_tensor(rng, {h, w}, 0.0, 1.0));
  Tensor p({h, w});
  p[3] = 2.0;
  p[11] = 1.0;
  ParamStore params;
  params["logits"] = random_tensor(rng, {h * w});
  params["probs"] = random_tensor(rng, {5}, 0.1, 0.9);
  params["alpha"] = random_tensor(rng, {4}, 0.1, 0.9);
  const Tensor alpha_gt = Tensor::vector({0.5, 0.0, 0.25, 0.25});
  GradCheckOptions opts;
  opts.samples_per_tensor = 20;
  for (int which = 0; which < 5; ++which) {
    const GradCheckResult r = grad_check(params, [&](Tape&, const ParamVars& v) {
      const Var s = softmax_map(v.at("logits"), h, w);
      switch (which) {
        case 0: return kl_loss({s}, {g});
        case 1: return nss_loss({s}, {p});
        case 2: return cc_loss({s}, {g});
        case 3: return add(bce_loss(v.at("probs"), {1, 0, 0, 1, 1}), scale(sum(v.at("logits")), 0.0));
        default: return add(att_loss(alpha_gt, v.at("alpha")), scale(sum(v.at("probs")), 0.0));
      }
    }, opts);
    EXPECT_TRUE(r.passed()) << "loss " << which << " max_error " << r.max_error;
  }
}

TEST(FixationMap, Counts) {
  const Tensor m = fixation_map({{0, 1, 0}, {1, 1, 0}, {2, 0, 1}}, GridSpec{3, 2});
  EXPECT_EQ(m, Tensor::matrix(2, 3, {0, 2, 0, 1, 0, 0}));
  EXPECT_THROW(fixation_map({{0, 3, 0}}, GridSpec{3, 2}), RangeError);
}

TEST(AttentionTarget, RowsAreFixationShares) {
  GeneratorConfig cfg;
  cfg.late_face_frame = 6;
  const SceneSequence s = generate_scene(cfg, 0);
  const Tensor target = attention_target(s);
  ASSERT_EQ(target.shape(), (Shape{s.frames, s.face_count() + 1}));
  for (std::size_t t = 0; t < s.frames; ++t) {
    double row = 0.0;
    for (std::size_t k = 0; k <= s.face_count(); ++k) row += target.at(t, k);
    EXPECT_NEAR(row, 1.0, 1e-12);
    if (t < 6) {
      EXPECT_EQ(target.at(t, s.face_count() - 1), 0.0);
    }
  }
}

TEST(LossWeights, Validation) {
  LossWeights w;
  w.beta1 = -1;
  EXPECT_THROW(w.validate(), ConfigError);
}
