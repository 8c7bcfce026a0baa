#pragma once

#include <cstdint>
#include <vector>

#include "stmg/numerics.hpp"
#include "stmg/synthdata.hpp"

namespace stmg {

struct ConsistencyStats {
  double split_half_cc_mean = 0.0;
  double split_half_cc_std = 0.0;
  /// Share of all fixations that fall in the frame's most-fixated face region.
  double same_face = 0.0;
  std::size_t trials = 0;
};

/// Split-half consistency: subjects are shuffled into two equal halves per
/// trial, each half's fixations blurred into a density map per frame, and the
/// CC between the two maps averaged over frames. Mean and population std are
/// taken over trials.
ConsistencyStats consistency_stats(const std::vector<std::vector<Fixation>>& fixations,
                                   const std::vector<std::vector<BoundingBox>>& face_boxes, const GridSpec& grid,
                                   std::size_t subjects, double blur_sigma, std::uint64_t seed,
                                   std::size_t trials = 20);
ConsistencyStats consistency_stats(const SceneSequence& scene, double blur_sigma, std::uint64_t seed,
                                   std::size_t trials = 20);

/// Mean pairwise Euclidean distance in pixels.
double dispersion(const std::vector<Vec2>& points);

/// Cell-center positions of the fixations that land in some face box.
std::vector<Vec2> face_fixation_points(const std::vector<Fixation>& fixations, const std::vector<BoundingBox>& boxes);

/// NSS of `map` at `points`, with the same kernel as nss_loss.
double contextual_nss(const Tensor& map, const std::vector<Fixation>& points);

/// Face region receiving the most fixations per frame (ties to the lower
/// face index), or -1 if no fixation lands on a face.
std::vector<int> modal_faces(const SceneSequence& scene);

struct TransitionStats {
  double mean_frames = 0.0;
  std::size_t events = 0;
  /// Speaker changes after which the gaze never reached the new speaker before the next change.
  std::size_t excluded = 0;
};

/// For each change of the speaking face, the number of frames until the modal
/// face equals the new speaker. Throws ContractError if there is no change.
TransitionStats transition_time(const std::vector<int>& modal_face, const std::vector<int>& speaker);

/// Speaking face per frame, -1 for frames without one.
std::vector<int> speaker_track(const SceneSequence& scene);

struct DatasetAnalysis {
  std::size_t scenes = 0;
  double split_half_cc_mean = 0.0;
  double split_half_cc_std = 0.0;
  double same_face = 0.0;
  double dispersion = 0.0;
  double nss_speaking = 0.0;
  double nss_silent = 0.0;
  TransitionStats transition;
};

/// Every statistic above pooled over a set of scenes: consistency per scene
/// averaged, same-face share and transitions pooled over all fixations and
/// events, dispersion averaged over frames with two or more face fixations,
/// and the contextual NSS of each frame's density at the centers of speaking
/// and silent faces.
DatasetAnalysis analyze_dataset(const std::vector<SceneSequence>& scenes, std::uint64_t seed, std::size_t trials = 20);

}  // namespace stmg
