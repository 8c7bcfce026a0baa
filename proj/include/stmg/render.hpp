#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stmg/gatnet.hpp"
#include "stmg/geometry.hpp"
#include "stmg/numerics.hpp"
#include "stmg/synthdata.hpp"
#include "stmg/tape.hpp"

namespace stmg {

/// Sound-source Gaussian of one face: mean and covariance in pixels.
struct GaussianParams {
  Vec2 mu{};
  Mat2 sigma{};
};

/// mu = box center, sigma = diag((w/4)^2, (h/4)^2). Throws DegenerateError for empty boxes.
GaussianParams face_gaussian(const BoundingBox& box);

/// M = sum_n label_n * N_n evaluated on the grid.
Tensor sound_source_map(const std::vector<int>& labels, const std::vector<GaussianParams>& gaussians,
                        const GridSpec& grid);

inline constexpr double kDefaultBinarizeThreshold = 0.2;

/// 1 where value > 0 and value >= threshold * max(map), else 0. A map without
/// positive values binarizes to all zeros.
Tensor binarize(const Tensor& map, double threshold = kDefaultBinarizeThreshold);

/// Binary map of cells whose centers fall inside any of `boxes`.
Tensor box_mask(const std::vector<BoundingBox>& boxes, const GridSpec& grid);

/// Three-layer convolutional refiner: 1 -> channels -> channels -> 1.
struct RefinerConfig {
  std::size_t channels = 8;
  std::size_t kernel = 3;
  double slope = kDefaultLeakySlope;

  void validate() const;
  bool operator==(const RefinerConfig&) const = default;
};

/// Refiner that passes its input through unchanged, plus uniform noise of
/// amplitude `noise` on every weight (0 gives the exact identity).
ParamStore init_refiner_params(const RefinerConfig& cfg, std::uint64_t seed, double noise = 0.01);

/// Face region owning each cell (index into `boxes`) or -1 for background.
/// Cells inside several boxes go to the box with the nearest center.
std::vector<int> assign_regions(const std::vector<BoundingBox>& boxes, const GridSpec& grid);

/// Multiplies every cell by the weight of its region: weights[k] for region k,
/// weights.back() for background. Shape of `feature` is {H, W}.
Tensor reweight_grid(const Tensor& feature, const std::vector<int>& regions, const std::vector<double>& weights);

/// On-tape attention refinement of one frame: re-weight by region, run the
/// refiner, clamp at zero and normalize to unit mass. `weights` holds one
/// entry per region followed by the background weight.
Var attention_refine(Tape& tape, const Tensor& feature, const std::vector<int>& regions, Var weights,
                     const ParamVars& refiner, const RefinerConfig& cfg);

/// Same computation on plain values.
Tensor attention_refine(const Tensor& feature, const std::vector<int>& regions, const std::vector<double>& weights,
                        const ParamStore& refiner, const RefinerConfig& cfg);

/// Visual prior of a frame: 0.3 * center bias + 0.7 * mean of the present faces'
/// Gaussians, each component normalized to unit mass.
Tensor visual_prior(const SceneSequence& scene, std::size_t t);

/// Boxes of faces present at frame t and their face indices.
struct FrameFaces {
  std::vector<std::size_t> faces;
  std::vector<BoundingBox> boxes;
};
FrameFaces frame_faces(const SceneSequence& scene, std::size_t t);

/// Saliency map per frame from per-frame attention weights
/// (see attention_weights_for_saliency) and a trained refiner.
std::vector<Tensor> predict_saliency(const SceneSequence& scene, const std::vector<std::vector<double>>& weights,
                                     const ParamStore& refiner, const RefinerConfig& cfg);

/// 8-bit binary PGM, scaled so the map maximum becomes 255.
std::string encode_pgm(const Tensor& map);

}  // namespace stmg
