#include "stmg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "stmg/error.hpp"
#include "stmg/render.hpp"

namespace stmg {

void LossWeights::validate() const {
  if (!(gamma1 >= 0.0)) throw ConfigError("loss.gamma1: must be >= 0");
  if (!(gamma2 >= 0.0)) throw ConfigError("loss.gamma2: must be >= 0");
  if (!(beta1 >= 0.0)) throw ConfigError("loss.beta1: must be >= 0");
  if (!(beta2 >= 0.0)) throw ConfigError("loss.beta2: must be >= 0");
}

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x.storage()) m += v;
  m /= n;
  double var = 0.0;
  for (double v : x.storage()) var += (v - m) * (v - m);
  return {m, std::sqrt(var / n)};
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
}

void require_unit_mass(const Tensor& m, const char* what) {
  if (std::abs(m.sum() - 1.0) > 1e-6) throw ContractError(std::string(what) + ": map does not sum to 1");
}

Var frame_average(std::vector<Var> parts) {
  if (parts.empty()) throw ContractError("loss over zero frames");
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

Var kl_frame(Var s, const Tensor& g) {
  const Tensor& sv = s.value();
  require_same(sv, g, "kl_loss");
  require_unit_mass(sv, "kl_loss");
  require_unit_mass(g, "kl_loss");
  return s.tape()->record(Tensor::scalar(kl_kernel(sv, g)), {s}, [g, in = s.id()](Tape& tape, std::size_t, const Tensor& og) {
    if (!tape.needs_grad(in)) return;
    const Tensor& sv = tape.value(in);
    Tensor d(sv.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (g[i] > 0.0 && sv[i] > kLogEps) d[i] = -og[0] * g[i] / sv[i];
    tape.accumulate(in, d);
  });
}

Var nss_frame(Var s, const Tensor& p) {
  const Tensor& sv = s.value();
  require_same(sv, p, "nss_loss");
  const double value = nss_kernel(sv, p);
  return s.tape()->record(Tensor::scalar(value), {s}, [p, value, in = s.id()](Tape& tape, std::size_t, const Tensor& og) {
    if (!tape.needs_grad(in)) return;
    const Tensor& sv = tape.value(in);
    const Moments mo = moments(sv);
    const double n = static_cast<double>(sv.size());
    const double pbar = p.sum() / n;
    Tensor d(sv.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = og[0] * ((p[i] - pbar) / mo.sd - value * (sv[i] - mo.mean) / (n * mo.sd * mo.sd));
    tape.accumulate(in, d);
  });
}

Var cc_frame(Var s, const Tensor& g) {
  const Tensor& sv = s.value();
  require_same(sv, g, "cc_loss");
  const double value = cc_kernel(sv, g);
  return s.tape()->record(Tensor::scalar(value), {s}, [g, value, in = s.id()](Tape& tape, std::size_t, const Tensor& og) {
    if (!tape.needs_grad(in)) return;
    const Tensor& sv = tape.value(in);
    const Moments ms = moments(sv), mg = moments(g);
    const double n = static_cast<double>(sv.size());
    Tensor d(sv.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = og[0] * ((g[i] - mg.mean) / (n * ms.sd * mg.sd) - value * (sv[i] - ms.mean) / (n * ms.sd * ms.sd));
    tape.accumulate(in, d);
  });
}

}  // namespace

double kl_kernel(const Tensor& s, const Tensor& g, double eps) {
  require_same(s, g, "kl");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g[i] > 0.0) acc += g[i] * std::log(g[i] / std::max(s[i], eps));
  }
  return acc;
}

double nss_kernel(const Tensor& s, const Tensor& p) {
  require_same(s, p, "nss");
  const Moments mo = moments(s);
  if (mo.sd <= 0.0) throw DegenerateError("nss: saliency map is constant");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (p[i] != 0.0) acc += (s[i] - mo.mean) / mo.sd * p[i];
  }
  return acc;
}

double cc_kernel(const Tensor& s, const Tensor& g) {
  require_same(s, g, "cc");
  const Moments ms = moments(s), mg = moments(g);
  if (ms.sd <= 0.0 || mg.sd <= 0.0) throw DegenerateError("cc: map has zero variance");
  double cov = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) cov += (s[i] - ms.mean) * (g[i] - mg.mean);
  cov /= static_cast<double>(s.size());
  return cov / (ms.sd * mg.sd);
}

double bce_kernel(const Tensor& p, const std::vector<int>& y, double eps) {
  if (p.size() != y.size()) throw DimensionError("bce: one label per probability required");
  if (p.size() == 0) throw ContractError("bce: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], eps, 1.0 - eps);
    acc -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return acc / static_cast<double>(p.size());
}

double att_kernel(const Tensor& gt, const Tensor& pre, double eps) {
  if (gt.size() != pre.size()) throw DimensionError("att: records differ in length");
  if (gt.size() == 0) throw ContractError("att: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 0.0) acc += gt[i] * std::log(gt[i] / std::max(pre[i], eps));
  }
  return acc / static_cast<double>(gt.size());
}

Var bce_loss(Var probs, const std::vector<int>& labels) {
  const double value = bce_kernel(probs.value(), labels);
  return probs.tape()->record(Tensor::scalar(value), {probs}, [labels, in = probs.id()](Tape& tape, std::size_t, const Tensor& og) {
    if (!tape.needs_grad(in)) return;
    const Tensor& p = tape.value(in);
    const double n = static_cast<double>(p.size());
    Tensor d(p.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (p[i] <= kLogEps || p[i] >= 1.0 - kLogEps) continue;
      d[i] = og[0] * (labels[i] ? -1.0 / p[i] : 1.0 / (1.0 - p[i])) / n;
    }
    tape.accumulate(in, d);
  });
}

Var att_loss(const Tensor& alpha_gt, Var alpha_pre) {
  const double value = att_kernel(alpha_gt, alpha_pre.value());
  return alpha_pre.tape()->record(Tensor::scalar(value), {alpha_pre}, [alpha_gt, in = alpha_pre.id()](Tape& tape, std::size_t, const Tensor& og) {
    if (!tape.needs_grad(in)) return;
    const Tensor& q = tape.value(in);
    const double n = static_cast<double>(q.size());
    Tensor d(q.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (alpha_gt[i] > 0.0 && q[i] > kLogEps) d[i] = -og[0] * alpha_gt[i] / q[i] / n;
    tape.accumulate(in, d);
  });
}

Var sound_loss(Var bce, Var att, double gamma1) { return add(bce, scale(att, gamma1)); }

Var kl_loss(const std::vector<Var>& s, const std::vector<Tensor>& g) {
  if (s.size() != g.size()) throw ContractError("kl_loss: frame counts differ");
  std::vector<Var> parts;
  for (std::size_t t = 0; t < s.size(); ++t) parts.push_back(kl_frame(s[t], g[t]));
  return frame_average(std::move(parts));
}

Var nss_loss(const std::vector<Var>& s, const std::vector<Tensor>& p) {
  if (s.size() != p.size()) throw ContractError("nss_loss: frame counts differ");
  std::vector<Var> parts;
  for (std::size_t t = 0; t < s.size(); ++t) parts.push_back(nss_frame(s[t], p[t]));
  return frame_average(std::move(parts));
}

Var cc_loss(const std::vector<Var>& s, const std::vector<Tensor>& g) {
  if (s.size() != g.size()) throw ContractError("cc_loss: frame counts differ");
  std::vector<Var> parts;
  for (std::size_t t = 0; t < s.size(); ++t) parts.push_back(cc_frame(s[t], g[t]));
  return frame_average(std::move(parts));
}

Var saliency_loss(Var kl, Var nss, Var cc, const LossWeights& w) {
  const double sign = w.literal_sum ? 1.0 : -1.0;
  return add(kl, add(scale(nss, sign * w.beta1), scale(cc, sign * w.beta2)));
}

Var total_loss(Var saliency, Var sound, double gamma2) { return add(saliency, scale(sound, gamma2)); }

Tensor fixation_map(const std::vector<Fixation>& fixations, const GridSpec& grid) {
  Tensor out({grid.height, grid.width});
  for (const Fixation& f : fixations) {
    if (f.col < 0 || f.row < 0 || static_cast<std::size_t>(f.col) >= grid.width ||
        static_cast<std::size_t>(f.row) >= grid.height)
      throw RangeError("fixation outside the grid");
    out.at(static_cast<std::size_t>(f.row), static_cast<std::size_t>(f.col)) += 1.0;
  }
  return out;
}

Tensor attention_target(const SceneSequence& scene) {
  const std::size_t n = scene.face_count();
  Tensor out({scene.frames, n + 1});
  for (std::size_t t = 0; t < scene.frames; ++t) {
    const FrameFaces ff = frame_faces(scene, t);
    const std::vector<int> regions = assign_regions(ff.boxes, scene.grid);
    const auto& fx = scene.fixations.at(t);
    if (fx.empty()) {
      out.at(t, n) = 1.0;
      continue;
    }
    for (const Fixation& f : fx) {
      const int r = regions.at(static_cast<std::size_t>(f.row) * scene.grid.width + static_cast<std::size_t>(f.col));
      out.at(t, r < 0 ? n : ff.faces[static_cast<std::size_t>(r)]) += 1.0;
    }
    for (std::size_t k = 0; k <= n; ++k) out.at(t, k) /= static_cast<double>(fx.size());
  }
  return out;
}

}  // namespace stmg
