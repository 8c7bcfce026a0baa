#include <gtest/gtest.h>

#include <cmath>

#include "stmg/error.hpp"
#include "stmg/render.hpp"
#include "stmg/synthdata.hpp"
#include "support.hpp"

using namespace stmg;

namespace {

double region_mass(const Tensor& map, const std::vector<int>& regions, int r) {
  double m = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (regions[i] == r) m += map[i];
  return m;
}

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

}  // namespace

TEST(Render, FaceGaussianFromBox) {
  const GaussianParams g = face_gaussian({0, 0, 40, 80});
  EXPECT_EQ(g.mu, (Vec2{20, 40}));
  EXPECT_EQ(g.sigma, (Mat2{100, 0, 0, 400}));
  const GaussianParams sq = face_gaussian({3, 5, 12, 12});
  EXPECT_EQ(sq.sigma[0], sq.sigma[3]);
  EXPECT_THROW(face_gaussian({0, 0, 0, 5}), DegenerateError);
}

TEST(Render, SoundMapIsLabelWeightedSum) {
  const GridSpec grid{30, 20};
  const GaussianParams a = face_gaussian({2, 2, 8, 10}), b = face_gaussian({15, 6, 10, 8});
  EXPECT_EQ(sound_source_map({0, 0}, {a, b}, grid).sum(), 0.0);
  const Tensor only_a = sound_source_map({1, 0}, {a, b}, grid);
  EXPECT_LT(max_abs_diff(only_a, gaussian2d(a.mu, a.sigma, grid)), 1e-15);
  const Tensor both = sound_source_map({1, 1}, {a, b}, grid);
  const Tensor ga = gaussian2d(a.mu, a.sigma, grid), gb = gaussian2d(b.mu, b.sigma, grid);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], ga[i] + gb[i], 1e-12);
  const std::size_t peak = argmax(only_a);
  EXPECT_TRUE((BoundingBox{2, 2, 8, 10}).contains_cell(peak % 30, peak / 30));
  EXPECT_THROW(sound_source_map({1}, {a, b}, grid), ContractError);
}

TEST(Render, Binarize) {
  const Tensor m = Tensor::matrix(2, 3, {0.0, 0.1, 0.5, 1.0, 0.19, 0.2});
  EXPECT_EQ(binarize(m, 0.0), Tensor::matrix(2, 3, {0, 1, 1, 1, 1, 1}));
  EXPECT_EQ(binarize(m, 1.0), Tensor::matrix(2, 3, {0, 0, 0, 1, 0, 0}));
  EXPECT_EQ(binarize(m), Tensor::matrix(2, 3, {0, 0, 1, 1, 0, 1}));
  EXPECT_EQ(binarize(Tensor({2, 2})).sum(), 0.0);
}

TEST(Render, BoxMaskUsesCellCenters) {
  const Tensor m = box_mask({{1.0, 0.0, 2.0, 1.0}}, GridSpec{4, 2});
  EXPECT_EQ(m, Tensor::matrix(2, 4, {0, 1, 1, 0, 0, 0, 0, 0}));
}

TEST(Render, AssignRegionsNearestCenter) {
  const GridSpec grid{10, 1};
  const auto r = assign_regions({{0, 0, 6, 1}, {4, 0, 6, 1}}, grid);
  EXPECT_EQ(r, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
  EXPECT_EQ(assign_regions({{0, 0, 2, 1}}, grid)[5], -1);
}

TEST(Render, IdentityRefinerPreservesShape) {
  RefinerConfig cfg;
  const ParamStore identity = init_refiner_params(cfg, 1, 0.0);
  Rng rng(3);
  const Tensor feature = stmg::testing::random_tensor(rng, {6, 7}, 0.1, 1.0);
  const auto regions = assign_regions({{1, 1, 3, 3}}, GridSpec{7, 6});
  const Tensor out = attention_refine(feature, regions, {1.0, 1.0}, identity, cfg);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], feature[i] / feature.sum(), 1e-12);
}

TEST(Render, ZeroFaceWeightRemovesRegionMass) {
  RefinerConfig cfg;
  const ParamStore identity = init_refiner_params(cfg, 1, 0.0);
  const Tensor feature({8, 8}, 1.0);
  const auto regions = assign_regions({{0, 0, 3, 3}, {4, 4, 3, 3}}, GridSpec{8, 8});
  const Tensor out = attention_refine(feature, regions, {0.0, 1.0, 1.0}, identity, cfg);
  EXPECT_EQ(region_mass(out, regions, 0), 0.0);
  EXPECT_NEAR(out.sum(), 1.0, 1e-12);
}

TEST(Render, FaceMassGrowsWithItsWeight) {
  RefinerConfig cfg;
  const ParamStore refiner = init_refiner_params(cfg, 5);
  const Tensor feature({8, 8}, 1.0);
  const auto regions = assign_regions({{0, 0, 3, 3}, {4, 4, 3, 3}}, GridSpec{8, 8});
  double last = -1.0;
  for (double w : {0.1, 0.3, 0.6, 1.0}) {
    const double m = region_mass(attention_refine(feature, regions, {w, 0.5, 0.5}, refiner, cfg), regions, 0);
    EXPECT_GT(m, last);
    last = m;
  }
}

TEST(Render, AllZeroWeightsAreDegenerate) {
  RefinerConfig cfg;
  const ParamStore identity = init_refiner_params(cfg, 1, 0.0);
  const auto regions = assign_regions({{0, 0, 3, 3}}, GridSpec{5, 5});
  EXPECT_THROW(attention_refine(Tensor({5, 5}, 1.0), regions, {0.0, 0.0}, identity, cfg), DegenerateError);
}

TEST(Render, RefinerConfigValidation) {
  RefinerConfig even;
  even.kernel = 4;
  EXPECT_THROW(even.validate(), ConfigError);
  const ParamStore p = init_refiner_params(RefinerConfig{}, 1);
  EXPECT_EQ(p.at("refiner.conv0.kernel").shape(), (Shape{8, 1, 3, 3}));
  EXPECT_EQ(p.at("refiner.conv2.kernel").shape(), (Shape{1, 8, 3, 3}));
}

TEST(Render, SaliencyFromScene) {
  GeneratorConfig gen;
  gen.frames = 4;
  const SceneSequence s = generate_scene(gen, 1);
  RefinerConfig cfg;
  const ParamStore refiner = init_refiner_params(cfg, 2);

  const Tensor prior = visual_prior(s, 0);
  EXPECT_NEAR(prior.sum(), 1.0, 1e-12);

  std::vector<std::vector<double>> uniform(s.frames, std::vector<double>(s.face_count() + 1, 1.0));
  const auto maps = predict_saliency(s, uniform, init_refiner_params(cfg, 2, 0.0), cfg);
  for (std::size_t t = 0; t < s.frames; ++t) {
    EXPECT_NEAR(maps[t].sum(), 1.0, 1e-9);
    EXPECT_LT(max_abs_diff(maps[t], visual_prior(s, t)), 1e-12);
  }

  for (std::size_t n = 0; n < s.face_count(); ++n) {
    std::vector<std::vector<double>> focus(s.frames, std::vector<double>(s.face_count() + 1, 0.0));
    for (auto& w : focus) w[n] = 1.0;
    const auto m = predict_saliency(s, focus, refiner, cfg);
    for (std::size_t t = 0; t < s.frames; ++t) {
      EXPECT_NEAR(m[t].sum(), 1.0, 1e-9);
      const auto regions = assign_regions(frame_faces(s, t).boxes, s.grid);
      EXPECT_EQ(regions[argmax(m[t])], static_cast<int>(n)) << "face " << n << " frame " << t;
    }
  }
}

TEST(Render, PgmHeader) {
  const std::string pgm = encode_pgm(Tensor::matrix(2, 3, {0, 0.5, 1, 0, 0, 0.25}));
  EXPECT_EQ(pgm.substr(0, 11), "P5\n3 2\n255\n");
  EXPECT_EQ(pgm.size(), 11u + 6u);
  EXPECT_EQ(static_cast<unsigned char>(pgm[11 + 2]), 255);
}
