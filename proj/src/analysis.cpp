#include "stmg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stmg/error.hpp"
#include "stmg/losses.hpp"
#include "stmg/random.hpp"
#include "stmg/render.hpp"

namespace stmg {

namespace {

std::vector<std::size_t> region_counts(const std::vector<Fixation>& fixations, const std::vector<BoundingBox>& boxes,
                                       const GridSpec& grid) {
  const std::vector<int> regions = assign_regions(boxes, grid);
  std::vector<std::size_t> counts(boxes.size(), 0);
  for (const Fixation& f : fixations) {
    const int r = regions.at(static_cast<std::size_t>(f.row) * grid.width + static_cast<std::size_t>(f.col));
    if (r >= 0) ++counts[static_cast<std::size_t>(r)];
  }
  return counts;
}

}  // namespace

ConsistencyStats consistency_stats(const std::vector<std::vector<Fixation>>& fixations,
                                   const std::vector<std::vector<BoundingBox>>& face_boxes, const GridSpec& grid,
                                   std::size_t subjects, double blur_sigma, std::uint64_t seed, std::size_t trials) {
  if (subjects < 2) throw ContractError("consistency_stats: need at least two subjects");
  if (fixations.size() != face_boxes.size()) throw ContractError("consistency_stats: face boxes missing for some frames");
  if (trials == 0) throw ContractError("consistency_stats: need at least one trial");

  ConsistencyStats out;
  out.trials = trials;
  std::size_t on_modal = 0, total = 0;
  for (std::size_t t = 0; t < fixations.size(); ++t) {
    total += fixations[t].size();
    const std::vector<std::size_t> counts = region_counts(fixations[t], face_boxes[t], grid);
    if (!counts.empty()) on_modal += *std::max_element(counts.begin(), counts.end());
  }
  out.same_face = total == 0 ? 0.0 : static_cast<double>(on_modal) / static_cast<double>(total);

  Rng rng(seed);
  std::vector<double> per_trial;
  std::vector<std::size_t> ids(subjects);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = subjects - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(ids[i], ids[j]);
    }
    std::vector<std::uint8_t> first_half(subjects, 0);
    for (std::size_t i = 0; i < subjects / 2; ++i) first_half[ids[i]] = 1;

    double acc = 0.0;
    std::size_t frames = 0;
    for (const auto& frame : fixations) {
      std::vector<Fixation> a, b;
      for (const Fixation& f : frame) {
        if (f.subject < 0 || static_cast<std::size_t>(f.subject) >= subjects)
          throw RangeError("consistency_stats: subject id out of range");
        (first_half[static_cast<std::size_t>(f.subject)] ? a : b).push_back(f);
      }
      if (a.empty() || b.empty()) continue;
      try {
        acc += cc_kernel(fixation_density(a, blur_sigma, grid), fixation_density(b, blur_sigma, grid));
        ++frames;
      } catch (const DegenerateError&) {
      }
    }
    if (frames > 0) per_trial.push_back(acc / static_cast<double>(frames));
  }
  if (per_trial.empty()) throw ContractError("consistency_stats: no frame had fixations in both halves");
  double m = 0.0;
  for (double v : per_trial) m += v;
  m /= static_cast<double>(per_trial.size());
  double var = 0.0;
  for (double v : per_trial) var += (v - m) * (v - m);
  out.split_half_cc_mean = m;
  out.split_half_cc_std = std::sqrt(var / static_cast<double>(per_trial.size()));
  return out;
}

ConsistencyStats consistency_stats(const SceneSequence& scene, double blur_sigma, std::uint64_t seed,
                                   std::size_t trials) {
  std::vector<std::vector<BoundingBox>> boxes;
  for (std::size_t t = 0; t < scene.frames; ++t) boxes.push_back(frame_faces(scene, t).boxes);
  return consistency_stats(scene.fixations, boxes, scene.grid, scene.subjects, blur_sigma, seed, trials);
}

double dispersion(const std::vector<Vec2>& points) {
  if (points.size() < 2) throw ContractError("dispersion: need at least two points");
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      acc += std::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
  const double n = static_cast<double>(points.size());
  return acc / (n * (n - 1.0) / 2.0);
}

std::vector<Vec2> face_fixation_points(const std::vector<Fixation>& fixations, const std::vector<BoundingBox>& boxes) {
  std::vector<Vec2> out;
  for (const Fixation& f : fixations) {
    const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const BoundingBox& b) {
      return b.contains_cell(static_cast<std::size_t>(f.col), static_cast<std::size_t>(f.row));
    });
    if (inside) out.push_back({f.col + 0.5, f.row + 0.5});
  }
  return out;
}

double contextual_nss(const Tensor& map, const std::vector<Fixation>& points) {
  return nss_kernel(map, fixation_map(points, GridSpec{map.cols(), map.rows()}));
}

std::vector<int> modal_faces(const SceneSequence& scene) {
  std::vector<int> out(scene.frames, -1);
  for (std::size_t t = 0; t < scene.frames; ++t) {
    const FrameFaces ff = frame_faces(scene, t);
    const std::vector<std::size_t> counts = region_counts(scene.fixations.at(t), ff.boxes, scene.grid);
    std::size_t best = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] > best) {
        best = counts[k];
        out[t] = static_cast<int>(ff.faces[k]);
      }
    }
  }
  return out;
}

std::vector<int> speaker_track(const SceneSequence& scene) {
  std::vector<int> out(scene.frames, -1);
  for (std::size_t t = 0; t < scene.frames; ++t) {
    if (const auto s = scene.speaker(t)) out[t] = static_cast<int>(*s);
  }
  return out;
}

TransitionStats transition_time(const std::vector<int>& modal_face, const std::vector<int>& speaker) {
  if (modal_face.size() != speaker.size()) throw ContractError("transition_time: tracks differ in length");
  std::vector<std::size_t> changes;
  int last = -1;
  for (std::size_t t = 0; t < speaker.size(); ++t) {
    if (speaker[t] < 0) continue;
    if (last >= 0 && speaker[t] != last) changes.push_back(t);
    last = speaker[t];
  }
  if (changes.empty()) throw ContractError("transition_time: no turn-taking event");

  TransitionStats out;
  double acc = 0.0;
  for (std::size_t e = 0; e < changes.size(); ++e) {
    const std::size_t start = changes[e];
    const std::size_t end = e + 1 < changes.size() ? changes[e + 1] : speaker.size();
    const int target = speaker[start];
    std::size_t t = start;
    while (t < end && modal_face[t] != target) ++t;
    if (t == end) {
      ++out.excluded;
      continue;
    }
    acc += static_cast<double>(t - start);
    ++out.events;
  }
  if (out.events > 0) out.mean_frames = acc / static_cast<double>(out.events);
  return out;
}

DatasetAnalysis analyze_dataset(const std::vector<SceneSequence>& scenes, std::uint64_t seed, std::size_t trials) {
  if (scenes.empty()) throw ContractError("analyze_dataset: no scenes");
  DatasetAnalysis out;
  out.scenes = scenes.size();
  std::size_t fix_total = 0, dispersion_frames = 0, speaking_frames = 0, silent_frames = 0;
  double same_face_weighted = 0.0, transit_sum = 0.0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const SceneSequence& s = scenes[i];
    const double blur = 0.03 * static_cast<double>(s.grid.width);
    const ConsistencyStats c = consistency_stats(s, blur, Rng::mix(seed, i), trials);
    out.split_half_cc_mean += c.split_half_cc_mean;
    out.split_half_cc_std += c.split_half_cc_std;
    std::size_t n_fix = 0;
    for (const auto& f : s.fixations) n_fix += f.size();
    same_face_weighted += c.same_face * static_cast<double>(n_fix);
    fix_total += n_fix;

    for (std::size_t t = 0; t < s.frames; ++t) {
      const FrameFaces ff = frame_faces(s, t);
      const std::vector<Vec2> pts = face_fixation_points(s.fixations[t], ff.boxes);
      if (pts.size() >= 2) {
        out.dispersion += stmg::dispersion(pts);
        ++dispersion_frames;
      }
      const Tensor density = s.density_frame(t);
      for (std::size_t k = 0; k < ff.faces.size(); ++k) {
        const Vec2 ctr = ff.boxes[k].center();
        const Fixation at{0, static_cast<int>(ctr[0]), static_cast<int>(ctr[1])};
        try {
          const double v = contextual_nss(density, {at});
          if (s.faces[ff.faces[k]].speaking_at(t)) {
            out.nss_speaking += v;
            ++speaking_frames;
          } else {
            out.nss_silent += v;
            ++silent_frames;
          }
        } catch (const DegenerateError&) {
        }
      }
    }

    try {
      const TransitionStats tr = transition_time(modal_faces(s), speaker_track(s));
      transit_sum += tr.mean_frames * static_cast<double>(tr.events);
      out.transition.events += tr.events;
      out.transition.excluded += tr.excluded;
    } catch (const ContractError&) {
    }
  }
  const double n = static_cast<double>(scenes.size());
  out.split_half_cc_mean /= n;
  out.split_half_cc_std /= n;
  out.same_face = fix_total ? same_face_weighted / static_cast<double>(fix_total) : 0.0;
  if (dispersion_frames) out.dispersion /= static_cast<double>(dispersion_frames);
  if (speaking_frames) out.nss_speaking /= static_cast<double>(speaking_frames);
  if (silent_frames) out.nss_silent /= static_cast<double>(silent_frames);
  if (out.transition.events) out.transition.mean_frames = transit_sum / static_cast<double>(out.transition.events);
  return out;
}

}  // namespace stmg
