#include "stmg/render.hpp"

#include <algorithm>
#include <cmath>

#include "stmg/error.hpp"
#include "stmg/random.hpp"

namespace stmg {

GaussianParams face_gaussian(const BoundingBox& box) {
  if (!box.valid()) throw DegenerateError("face_gaussian: box must have positive width and height");
  const double sx = box.w / 4.0, sy = box.h / 4.0;
  return {box.center(), {sx * sx, 0.0, 0.0, sy * sy}};
}

Tensor sound_source_map(const std::vector<int>& labels, const std::vector<GaussianParams>& gaussians,
                        const GridSpec& grid) {
  if (labels.size() != gaussians.size()) throw ContractError("sound_source_map: one label per face required");
  Tensor out({grid.height, grid.width});
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] == 0) continue;
    const Tensor g = gaussian2d(gaussians[n].mu, gaussians[n].sigma, grid);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += labels[n] * g[i];
  }
  return out;
}

Tensor binarize(const Tensor& map, double threshold) {
  double mx = 0.0;
  for (double v : map.storage()) mx = std::max(mx, v);
  Tensor out(map.shape(), 0.0);
  if (mx <= 0.0) return out;
  const double cut = threshold * mx;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] > 0.0 && map[i] >= cut) ? 1.0 : 0.0;
  return out;
}

Tensor box_mask(const std::vector<BoundingBox>& boxes, const GridSpec& grid) {
  Tensor out({grid.height, grid.width});
  for (std::size_t r = 0; r < grid.height; ++r)
    for (std::size_t c = 0; c < grid.width; ++c)
      for (const BoundingBox& b : boxes) {
        if (b.contains_cell(c, r)) {
          out.at(r, c) = 1.0;
          break;
        }
      }
  return out;
}

void RefinerConfig::validate() const {
  if (channels == 0) throw ConfigError("refiner.channels: must be at least 1");
  if (kernel % 2 == 0) throw ConfigError("refiner.kernel: must be odd");
}

namespace {

struct ConvShape {
  std::size_t cout, cin;
};

std::vector<ConvShape> conv_plan(const RefinerConfig& cfg) {
  return {{cfg.channels, 1}, {cfg.channels, cfg.channels}, {1, cfg.channels}};
}

std::string conv_name(std::size_t k, const char* what) { return "refiner.conv" + std::to_string(k) + "." + what; }

}  // namespace

ParamStore init_refiner_params(const RefinerConfig& cfg, std::uint64_t seed, double noise) {
  cfg.validate();
  Rng rng(seed);
  ParamStore store;
  const std::vector<ConvShape> plan = conv_plan(cfg);
  const std::size_t k = cfg.kernel, mid = k / 2;
  for (std::size_t l = 0; l < plan.size(); ++l) {
    Tensor kernel({plan[l].cout, plan[l].cin, k, k});
    for (double& v : kernel.storage()) v = noise > 0.0 ? rng.uniform(-noise, noise) : 0.0;
    kernel[(0 * plan[l].cin + 0) * k * k + mid * k + mid] += 1.0;
    store[conv_name(l, "kernel")] = std::move(kernel);
    store[conv_name(l, "bias")] = Tensor({plan[l].cout}, 0.0);
  }
  return store;
}

std::vector<int> assign_regions(const std::vector<BoundingBox>& boxes, const GridSpec& grid) {
  std::vector<int> out(grid.cells(), -1);
  for (std::size_t r = 0; r < grid.height; ++r)
    for (std::size_t c = 0; c < grid.width; ++c) {
      double best = 0.0;
      for (std::size_t n = 0; n < boxes.size(); ++n) {
        if (!boxes[n].contains_cell(c, r)) continue;
        const Vec2 ctr = boxes[n].center();
        const double dx = static_cast<double>(c) + 0.5 - ctr[0], dy = static_cast<double>(r) + 0.5 - ctr[1];
        const double d = dx * dx + dy * dy;
        int& slot = out[r * grid.width + c];
        if (slot < 0 || d < best) {
          slot = static_cast<int>(n);
          best = d;
        }
      }
    }
  return out;
}

Tensor reweight_grid(const Tensor& feature, const std::vector<int>& regions, const std::vector<double>& weights) {
  if (regions.size() != feature.size()) throw DimensionError("reweight_grid: region map does not match the grid");
  if (weights.empty()) throw ContractError("reweight_grid: need at least the background weight");
  Tensor out = feature;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t w = regions[i] < 0 ? weights.size() - 1 : static_cast<std::size_t>(regions[i]);
    if (w >= weights.size()) throw RangeError("reweight_grid: region without a weight");
    out[i] *= weights[w];
  }
  return out;
}

Var attention_refine(Tape& tape, const Tensor& feature, const std::vector<int>& regions, Var weights,
                     const ParamVars& refiner, const RefinerConfig& cfg) {
  const std::size_t h = feature.rows(), w = feature.cols(), cells = h * w;
  if (regions.size() != cells) throw DimensionError("attention_refine: region map does not match the grid");
  const std::size_t k = weights.value().size();
  // Row r of `indicator` is the feature restricted to region r (last row: background),
  // so weights^T * indicator is the re-weighted feature. The refiner sees it
  // scaled by the cell count, i.e. O(1) per cell for a unit-mass feature.
  Tensor indicator({k, cells});
  for (std::size_t i = 0; i < cells; ++i) {
    const std::size_t r = regions[i] < 0 ? k - 1 : static_cast<std::size_t>(regions[i]);
    if (r >= k) throw RangeError("attention_refine: region without a weight");
    indicator.at(r, i) = feature[i] * static_cast<double>(cells);
  }
  Var x = matmul(reshape(weights, {1, k}), tape.constant(std::move(indicator)));
  x = reshape(x, {1, h, w});
  const std::size_t layers = conv_plan(cfg).size();
  for (std::size_t l = 0; l < layers; ++l) {
    auto find = [&](const std::string& name) -> Var {
      auto it = refiner.find(name);
      if (it == refiner.end()) throw DimensionError("missing refiner parameter '" + name + "'");
      return it->second;
    };
    x = conv2d(x, find(conv_name(l, "kernel")), find(conv_name(l, "bias")));
    x = l + 1 < layers ? leaky_relu(x, cfg.slope) : relu(x);
  }
  x = reshape(x, {h, w});
  const Var mass = sum(x);
  if (mass.value()[0] <= 0.0) throw DegenerateError("attention_refine: refined map has no positive mass");
  return div_broadcast(x, mass);
}

Tensor attention_refine(const Tensor& feature, const std::vector<int>& regions, const std::vector<double>& weights,
                        const ParamStore& refiner, const RefinerConfig& cfg) {
  Tape tape;
  const ParamVars vars = bind_params(tape, refiner, false);
  const Var w = tape.constant(Tensor({weights.size()}, weights));
  return attention_refine(tape, feature, regions, w, vars, cfg).value();
}

FrameFaces frame_faces(const SceneSequence& scene, std::size_t t) {
  FrameFaces out;
  for (std::size_t n = 0; n < scene.faces.size(); ++n) {
    if (!scene.faces[n].present(t)) continue;
    out.faces.push_back(n);
    out.boxes.push_back(scene.faces[n].box(t));
  }
  return out;
}

Tensor visual_prior(const SceneSequence& scene, std::size_t t) {
  const GridSpec& g = scene.grid;
  const double w = static_cast<double>(g.width), h = static_cast<double>(g.height);
  Tensor center = gaussian2d({0.5 * w, 0.5 * h}, {w * w / 16.0, 0.0, 0.0, h * h / 16.0}, g);
  const double cmass = center.sum();
  Tensor out({g.height, g.width});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.3 * center[i] / cmass;
  const FrameFaces ff = frame_faces(scene, t);
  if (ff.boxes.empty()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= 0.3;
    return out;
  }
  const double share = 0.7 / static_cast<double>(ff.boxes.size());
  for (const BoundingBox& b : ff.boxes) {
    const GaussianParams gp = face_gaussian(b);
    const Tensor m = gaussian2d(gp.mu, gp.sigma, g);
    const double mass = m.sum();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += share * m[i] / mass;
  }
  return out;
}

std::vector<Tensor> predict_saliency(const SceneSequence& scene, const std::vector<std::vector<double>>& weights,
                                     const ParamStore& refiner, const RefinerConfig& cfg) {
  if (weights.size() != scene.frames) throw ContractError("predict_saliency: attention weights missing for some frames");
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < scene.frames; ++t) {
    const FrameFaces ff = frame_faces(scene, t);
    if (weights[t].size() != scene.face_count() + 1) throw ContractError("predict_saliency: weight vector size mismatch");
    std::vector<double> w;
    for (std::size_t n : ff.faces) w.push_back(weights[t][n]);
    w.push_back(weights[t].back());
    out.push_back(attention_refine(visual_prior(scene, t), assign_regions(ff.boxes, scene.grid), w, refiner, cfg));
  }
  return out;
}

std::string encode_pgm(const Tensor& map) {
  const std::size_t h = map.rows(), w = map.cols();
  double mx = 0.0;
  for (double v : map.storage()) mx = std::max(mx, v);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : map.storage()) {
    const double scaled = mx > 0.0 ? std::clamp(v / mx, 0.0, 1.0) * 255.0 : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  return out;
}

}  // namespace stmg
