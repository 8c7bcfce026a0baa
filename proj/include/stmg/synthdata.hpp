#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stmg/geometry.hpp"
#include "stmg/numerics.hpp"
#include "stmg/tensor.hpp"

namespace stmg {

/// One gaze sample: which subject looked at which grid cell.
struct Fixation {
  int subject = 0;
  int col = 0;
  int row = 0;
  bool operator==(const Fixation&) const = default;
};

/// A face present from `first_frame` to the end of the clip. Per-frame arrays
/// are indexed by (t - first_frame).
struct FaceTrack {
  int face_id = 0;
  std::size_t first_frame = 0;
  std::vector<BoundingBox> boxes;
  Tensor features;  // {frames_present, face_dim}
  std::vector<int> speaking;

  std::size_t frames_present() const { return boxes.size(); }
  bool present(std::size_t t) const { return t >= first_frame && t - first_frame < boxes.size(); }
  const BoundingBox& box(std::size_t t) const { return boxes.at(t - first_frame); }
  int speaking_at(std::size_t t) const { return present(t) ? speaking.at(t - first_frame) : 0; }
  bool operator==(const FaceTrack&) const = default;
};

/// A synthetic multi-face clip with every per-frame annotation.
struct SceneSequence {
  std::string id;
  GridSpec grid;
  std::size_t frames = 0;
  std::size_t face_dim = 0;
  std::size_t visual_dim = 0;
  std::size_t audio_dim = 0;
  std::size_t subjects = 0;
  std::vector<FaceTrack> faces;
  Tensor visual;   // {frames, visual_dim}
  Tensor audio;    // {frames, audio_dim}
  Tensor density;  // {frames, height, width}; each frame sums to 1
  std::vector<std::vector<Fixation>> fixations;  // per frame
  std::vector<int> background_voiced;            // per frame
  std::vector<int> attention_target;             // per frame; face index the gaze follows

  std::size_t face_count() const { return faces.size(); }
  /// Index of the speaking face at t, or nullopt for a background-voiced/silent frame.
  std::optional<std::size_t> speaker(std::size_t t) const;
  Tensor density_frame(std::size_t t) const;
  bool operator==(const SceneSequence&) const = default;
};

struct GeneratorConfig {
  std::size_t faces = 3;
  std::size_t frames = 10;
  std::size_t width = 48;
  std::size_t height = 36;
  std::size_t face_dim = 32;
  std::size_t visual_dim = 16;
  std::size_t audio_dim = 16;
  std::size_t subjects = 32;
  /// Speaking turn length, uniform in [turn_min, turn_max] frames.
  std::size_t turn_min = 3;
  std::size_t turn_max = 8;
  /// Probability that a turn is background-voiced (no face speaks).
  double background_voiced_prob = 0.0;
  /// Fraction of fixations that land on the current attention target.
  double on_target_fraction = 0.738;
  /// Of the remaining fixations, the fraction landing on other faces (rest: background).
  double other_face_fraction = 0.5;
  /// Frames between a speaker change and the gaze following it.
  std::size_t attention_lag = 0;
  /// Separation of the planted class means in units of feature noise sigma.
  double snr = 4.0;
  /// Fixation spread inside a face box as a fraction of box extent (sigma = extent * spread).
  double fixation_spread = 1.0 / 6.0;
  /// Density blur sigma as a fraction of frame width.
  double blur_fraction = 0.03;
  /// If nonzero, the last face only appears from this frame onwards.
  std::size_t late_face_frame = 0;
  /// Seed of the planted signal directions; shared by every scene of a dataset.
  std::uint64_t world_seed = 2024;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

SceneSequence generate_scene(const GeneratorConfig& cfg);
/// Scene `index` of a dataset: same config, per-scene seed derived from (seed, index).
SceneSequence generate_scene(const GeneratorConfig& cfg, std::size_t index);

/// Sum of isotropic Gaussians (sigma = blur_sigma pixels) centered on each
/// fixated cell, renormalized to unit mass. Throws ContractError when empty.
Tensor fixation_density(const std::vector<Fixation>& fixations, double blur_sigma, const GridSpec& grid);

/// Index of the face whose box contains the cell at frame t (first match), if any.
std::optional<std::size_t> face_at(const SceneSequence& scene, std::size_t t, int col, int row);

void write_scene(const SceneSequence& scene, const std::string& path);
SceneSequence read_scene(const std::string& path);
std::string encode_scene(const SceneSequence& scene);
SceneSequence decode_scene(const std::string& bytes);

inline constexpr const char* kSceneVersion = "mvs-1";

}  // namespace stmg
