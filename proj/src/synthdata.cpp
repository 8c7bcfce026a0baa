#include "stmg/synthdata.hpp"

#include <cmath>

#include "stmg/error.hpp"
#include "stmg/random.hpp"

namespace stmg {

std::optional<std::size_t> SceneSequence::speaker(std::size_t t) const {
  for (std::size_t n = 0; n < faces.size(); ++n) {
    if (faces[n].speaking_at(t)) return n;
  }
  return std::nullopt;
}

Tensor SceneSequence::density_frame(std::size_t t) const {
  const std::size_t plane = grid.cells();
  std::vector<double> data(density.storage().begin() + static_cast<std::ptrdiff_t>(t * plane),
                           density.storage().begin() + static_cast<std::ptrdiff_t>((t + 1) * plane));
  return Tensor({grid.height, grid.width}, std::move(data));
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); };
  if (faces == 0) fail("faces", "must be at least 1");
  if (frames == 0) fail("frames", "must be at least 1");
  if (width < 4 || height < 4) fail("width", "grid must be at least 4x4");
  if (width < 3 * faces) fail("width", "too narrow for the requested number of faces");
  if (face_dim < 2 || visual_dim < 2 || audio_dim < 3) fail("face_dim", "feature dims too small");
  if (subjects == 0) fail("subjects", "must be at least 1");
  if (turn_min == 0 || turn_max < turn_min) fail("turn_min", "need 1 <= turn_min <= turn_max");
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(name, "must lie in [0, 1]");
  };
  prob(background_voiced_prob, "background_voiced_prob");
  prob(on_target_fraction, "on_target_fraction");
  prob(other_face_fraction, "other_face_fraction");
  if (!(snr >= 0.0) || !std::isfinite(snr)) fail("snr", "must be finite and >= 0");
  if (!(fixation_spread > 0.0)) fail("fixation_spread", "must be > 0");
  if (!(blur_fraction > 0.0)) fail("blur_fraction", "must be > 0");
  if (late_face_frame > 0 && faces < 2) fail("late_face_frame", "needs at least 2 faces");
  if (late_face_frame >= frames && late_face_frame > 0) fail("late_face_frame", "must be < frames");
}

Tensor fixation_density(const std::vector<Fixation>& fixations, double blur_sigma, const GridSpec& grid) {
  if (fixations.empty()) throw ContractError("fixation_density: empty fixation set");
  if (!(blur_sigma > 0.0)) throw ContractError("fixation_density: blur sigma must be > 0");
  Tensor out({grid.height, grid.width});
  const double inv = 1.0 / (2.0 * blur_sigma * blur_sigma);
  // Separable: each fixation contributes gx(col) * gy(row).
  std::vector<double> gx(grid.width), gy(grid.height);
  for (const Fixation& f : fixations) {
    if (f.col < 0 || f.row < 0 || static_cast<std::size_t>(f.col) >= grid.width ||
        static_cast<std::size_t>(f.row) >= grid.height) {
      throw RangeError("fixation outside the grid");
    }
    for (std::size_t c = 0; c < grid.width; ++c) {
      const double d = static_cast<double>(c) - f.col;
      gx[c] = std::exp(-d * d * inv);
    }
    for (std::size_t r = 0; r < grid.height; ++r) {
      const double d = static_cast<double>(r) - f.row;
      gy[r] = std::exp(-d * d * inv);
    }
    for (std::size_t r = 0; r < grid.height; ++r)
      for (std::size_t c = 0; c < grid.width; ++c) out.at(r, c) += gy[r] * gx[c];
  }
  const double total = out.sum();
  for (double& v : out.storage()) v /= total;
  return out;
}

std::optional<std::size_t> face_at(const SceneSequence& scene, std::size_t t, int col, int row) {
  for (std::size_t n = 0; n < scene.faces.size(); ++n) {
    const FaceTrack& f = scene.faces[n];
    if (f.present(t) && f.box(t).contains_cell(static_cast<std::size_t>(col), static_cast<std::size_t>(row))) return n;
  }
  return std::nullopt;
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Removes the component of v along the unit vector u.
void orthogonalize(std::vector<double>& v, const std::vector<double>& u) {
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * u[i];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * u[i];
}

struct PlantedDirections {
  std::vector<double> face_speaking;
  std::vector<double> visual_background;
  std::vector<double> audio_voice;
  std::vector<double> audio_background;
};

PlantedDirections planted_directions(const GeneratorConfig& cfg) {
  Rng rng(cfg.world_seed);
  PlantedDirections p;
  p.face_speaking = random_unit(rng, cfg.face_dim);
  p.visual_background = random_unit(rng, cfg.visual_dim);
  p.audio_voice = random_unit(rng, cfg.audio_dim);
  p.audio_background = random_unit(rng, cfg.audio_dim);
  orthogonalize(p.audio_background, p.audio_voice);
  double norm = 0.0;
  for (double x : p.audio_background) norm += x * x;
  for (double& x : p.audio_background) x /= std::sqrt(norm);
  return p;
}

struct Turn {
  std::size_t start = 0;
  std::size_t length = 0;
  std::optional<std::size_t> speaker;
};

bool face_present(const GeneratorConfig& cfg, std::size_t n, std::size_t t) {
  return !(cfg.late_face_frame > 0 && n + 1 == cfg.faces && t < cfg.late_face_frame);
}

std::vector<Turn> sample_turns(const GeneratorConfig& cfg, Rng& rng) {
  std::vector<Turn> turns;
  std::optional<std::size_t> previous;
  for (std::size_t t = 0; t < cfg.frames;) {
    Turn turn;
    turn.start = t;
    turn.length = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.turn_min),
                                                           static_cast<std::int64_t>(cfg.turn_max)));
    turn.length = std::min(turn.length, cfg.frames - t);
    if (!(cfg.background_voiced_prob > 0.0 && rng.bernoulli(cfg.background_voiced_prob))) {
      std::vector<std::size_t> candidates;
      for (std::size_t n = 0; n < cfg.faces; ++n) {
        if (face_present(cfg, n, t) && n != previous) candidates.push_back(n);
      }
      if (candidates.empty()) candidates.push_back(*previous);
      turn.speaker = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
      previous = turn.speaker;
    }
    turns.push_back(turn);
    t += turn.length;
  }
  return turns;
}

std::vector<BoundingBox> place_boxes(const GeneratorConfig& cfg, Rng& rng) {
  std::vector<BoundingBox> boxes;
  const std::size_t slot = cfg.width / cfg.faces;
  const auto w = static_cast<std::int64_t>(std::max<std::size_t>(2, (slot * 6 + 5) / 10));
  const auto h = std::min<std::int64_t>(static_cast<std::int64_t>(cfg.height) - 2, (w * 6 + 2) / 5);
  const auto height = static_cast<std::int64_t>(cfg.height);
  const std::int64_t y_mid = (height - h) / 2;
  const std::int64_t y_span = std::max<std::int64_t>(0, std::min(y_mid, height / 8));
  for (std::size_t n = 0; n < cfg.faces; ++n) {
    const std::int64_t x = static_cast<std::int64_t>(slot * n) + rng.uniform_int(0, static_cast<std::int64_t>(slot) - w);
    const std::int64_t y = y_mid + rng.uniform_int(-y_span, y_span);
    boxes.push_back({static_cast<double>(x), static_cast<double>(y), static_cast<double>(w), static_cast<double>(h)});
  }
  return boxes;
}

Fixation sample_in_box(const BoundingBox& box, double spread, int subject, Rng& rng) {
  const Vec2 c = box.center();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double px = rng.normal(c[0], box.w * spread);
    const double py = rng.normal(c[1], box.h * spread);
    if (px < box.x || py < box.y || px >= box.x + box.w || py >= box.y + box.h) continue;
    const int col = static_cast<int>(std::floor(px)), row = static_cast<int>(std::floor(py));
    if (box.contains_cell(static_cast<std::size_t>(col), static_cast<std::size_t>(row))) return {subject, col, row};
  }
  return {subject, static_cast<int>(std::floor(c[0])), static_cast<int>(std::floor(c[1]))};
}

}  // namespace

SceneSequence generate_scene(const GeneratorConfig& cfg) { return generate_scene(cfg, 0); }

SceneSequence generate_scene(const GeneratorConfig& cfg, std::size_t index) {
  cfg.validate();
  Rng rng(Rng::mix(cfg.seed, index));
  const PlantedDirections dirs = planted_directions(cfg);

  SceneSequence s;
  s.id = "scene_" + std::to_string(cfg.seed) + "_" + std::to_string(index);
  s.grid = {cfg.width, cfg.height};
  s.frames = cfg.frames;
  s.face_dim = cfg.face_dim;
  s.visual_dim = cfg.visual_dim;
  s.audio_dim = cfg.audio_dim;
  s.subjects = cfg.subjects;

  const std::vector<BoundingBox> boxes = place_boxes(cfg, rng);
  const std::vector<Turn> turns = sample_turns(cfg, rng);
  std::vector<std::optional<std::size_t>> speaker(cfg.frames);
  for (const Turn& turn : turns)
    for (std::size_t t = turn.start; t < turn.start + turn.length; ++t) speaker[t] = turn.speaker;

  s.background_voiced.resize(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) s.background_voiced[t] = speaker[t] ? 0 : 1;

  // Faces: identity offset orthogonal to the planted direction, plus signal and unit noise.
  const double half = 0.5 * cfg.snr;
  for (std::size_t n = 0; n < cfg.faces; ++n) {
    FaceTrack track;
    track.face_id = static_cast<int>(n);
    track.first_frame = face_present(cfg, n, 0) ? 0 : cfg.late_face_frame;
    std::vector<double> identity = random_unit(rng, cfg.face_dim);
    orthogonalize(identity, dirs.face_speaking);
    const std::size_t present = cfg.frames - track.first_frame;
    track.features = Tensor({present, cfg.face_dim});
    for (std::size_t k = 0; k < present; ++k) {
      const std::size_t t = track.first_frame + k;
      const int y = speaker[t] == n ? 1 : 0;
      track.boxes.push_back(boxes[n]);
      track.speaking.push_back(y);
      const double sign = y ? half : -half;
      for (std::size_t j = 0; j < cfg.face_dim; ++j) {
        track.features.at(k, j) = identity[j] + sign * dirs.face_speaking[j] + rng.normal();
      }
    }
    s.faces.push_back(std::move(track));
  }

  s.visual = Tensor({cfg.frames, cfg.visual_dim});
  s.audio = Tensor({cfg.frames, cfg.audio_dim});
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const double bg = s.background_voiced[t] ? half : -half;
    const double voice = speaker[t] ? half : -half;
    for (std::size_t j = 0; j < cfg.visual_dim; ++j) s.visual.at(t, j) = bg * dirs.visual_background[j] + rng.normal();
    for (std::size_t j = 0; j < cfg.audio_dim; ++j) {
      s.audio.at(t, j) = voice * dirs.audio_voice[j] + bg * dirs.audio_background[j] + rng.normal();
    }
  }

  // The gaze follows the most recent face speaker as of (t - lag).
  std::optional<std::size_t> first_face_speaker;
  for (std::size_t t = 0; t < cfg.frames && !first_face_speaker; ++t) first_face_speaker = speaker[t];
  s.attention_target.resize(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    std::optional<std::size_t> target;
    if (t >= cfg.attention_lag) {
      for (std::size_t u = t - cfg.attention_lag + 1; u-- > 0 && !target;) target = speaker[u];
    }
    if (!target) target = first_face_speaker.value_or(0);
    if (!face_present(cfg, *target, t)) target = 0;
    s.attention_target[t] = static_cast<int>(*target);
  }

  const double blur = cfg.blur_fraction * static_cast<double>(cfg.width);
  s.density = Tensor({cfg.frames, cfg.height, cfg.width});
  s.fixations.resize(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const auto target = static_cast<std::size_t>(s.attention_target[t]);
    std::vector<std::size_t> others;
    for (std::size_t n = 0; n < cfg.faces; ++n) {
      if (n != target && face_present(cfg, n, t)) others.push_back(n);
    }
    for (std::size_t subj = 0; subj < cfg.subjects; ++subj) {
      const int sid = static_cast<int>(subj);
      const double u = rng.uniform();
      const double other_cut = cfg.on_target_fraction + (1.0 - cfg.on_target_fraction) * cfg.other_face_fraction;
      if (u < cfg.on_target_fraction || (u < other_cut && others.empty())) {
        s.fixations[t].push_back(sample_in_box(boxes[target], cfg.fixation_spread, sid, rng));
      } else if (u < other_cut) {
        const std::size_t pick = others[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(others.size()) - 1))];
        s.fixations[t].push_back(sample_in_box(boxes[pick], cfg.fixation_spread, sid, rng));
      } else {
        Fixation f{sid, 0, 0};
        for (int attempt = 0; attempt < 1000; ++attempt) {
          f.col = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.width) - 1));
          f.row = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.height) - 1));
          if (!face_at(s, t, f.col, f.row)) break;
        }
        s.fixations[t].push_back(f);
      }
    }
    const Tensor g = fixation_density(s.fixations[t], blur, s.grid);
    std::copy(g.storage().begin(), g.storage().end(),
              s.density.storage().begin() + static_cast<std::ptrdiff_t>(t * s.grid.cells()));
  }
  return s;
}

}  // namespace stmg
