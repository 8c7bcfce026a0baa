#include "stmg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "stmg/pipeline.hpp"
#include "stmg/random.hpp"

namespace stmg {

double gradient_error(double analytic, double numeric, double rel_tol, double abs_floor) {
  return std::abs(analytic - numeric) / (abs_floor + rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ParamStore& params, const ScalarObjective& objective) {
  Tape tape;
  const ParamVars vars = bind_params(tape, params, false);
  const Var out = objective(tape, vars);
  return {out.value().item(), tape.branch_signature()};
}

std::vector<std::size_t> sample_entries(std::size_t size, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  if (size <= k) {
    for (std::size_t i = 0; i < size; ++i) out.push_back(i);
    return out;
  }
  while (out.size() < k) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(size) - 1));
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GradCheckResult grad_check(const ParamStore& params, const ScalarObjective& objective, const GradCheckOptions& opts) {
  ParamStore analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    const ParamVars vars = bind_params(tape, params, true);
    const Var out = objective(tape, vars);
    tape.backward(out);
    base_signature = tape.branch_signature();
    for (const auto& [name, v] : vars) analytic[name] = tape.grad(v);
  }

  GradCheckResult result;
  Rng rng(opts.seed);
  ParamStore probe = params;
  for (const auto& [name, tensor] : params) {
    ++result.tensors;
    for (std::size_t idx : sample_entries(tensor.size(), opts.samples_per_tensor, rng)) {
      const double x0 = tensor[idx];
      double h = opts.step * std::max(1.0, std::abs(x0));
      GradCheckEntry e{name, idx, analytic[name][idx], 0.0, 0.0, false};
      auto probe_at = [&](double x) {
        probe[name][idx] = x;
        const Probe p = evaluate(probe, objective);
        probe[name][idx] = x0;
        return p;
      };
      // Richardson extrapolation of central differences at h and h/2; false
      // when a probe lands on a different smooth piece than the base point.
      auto estimate = [&](double step, double& out) {
        const Probe p1 = probe_at(x0 + step), m1 = probe_at(x0 - step);
        const Probe p2 = probe_at(x0 + 0.5 * step), m2 = probe_at(x0 - 0.5 * step);
        const double d1 = (p1.value - m1.value) / (2.0 * step);
        const double d2 = (p2.value - m2.value) / step;
        out = (4.0 * d2 - d1) / 3.0;
        return p1.signature == base_signature && m1.signature == base_signature &&
               p2.signature == base_signature && m2.signature == base_signature;
      };
      // Shrink the step until two successive estimates agree and keep the
      // larger-step estimate of the closest-agreeing pair.
      bool have_previous = false;
      double previous = 0.0, best_change = 0.0;
      bool have_best = false;
      for (std::size_t attempt = 0; attempt <= opts.max_shrinks; ++attempt, h /= 10.0) {
        double current = 0.0;
        const bool smooth = estimate(h, current);
        if (!smooth) {
          if (!have_best) {
            e.numeric = current;
            e.straddles_kink = true;
          }
          have_previous = false;
          continue;
        }
        if (!have_best) {
          e.numeric = current;
          e.straddles_kink = false;
        }
        if (have_previous) {
          const double change = gradient_error(previous, current, opts.rel_tol, opts.abs_floor);
          if (!have_best || change < best_change) {
            best_change = change;
            e.numeric = previous;
            e.straddles_kink = false;
            have_best = true;
          }
          if (change <= 0.1) break;
        }
        have_previous = true;
        previous = current;
      }
      e.error = gradient_error(e.analytic, e.numeric, opts.rel_tol, opts.abs_floor);
      if (e.straddles_kink) {
        ++result.skipped;
      } else {
        result.max_error = std::max(result.max_error, e.error);
        if (e.error > 1.0) ++result.failures;
      }
      result.entries.push_back(e);
    }
  }
  return result;
}

PipelineCheckReport pipeline_grad_check(const NetworkConfig& net, std::uint64_t seed, const PipelineCheckOptions& opts) {
  PipelineCheckReport report;
  Rng rng(seed);
  for (std::size_t i = 0; i < opts.instances; ++i) {
    GeneratorConfig g;
    g.faces = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(opts.max_faces)));
    g.frames = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(opts.max_frames)));
    g.width = opts.width;
    g.height = opts.height;
    g.face_dim = net.face_dim;
    g.visual_dim = net.visual_dim;
    g.audio_dim = net.audio_dim;
    g.subjects = 8;
    g.turn_min = 1;
    g.turn_max = 3;
    g.background_voiced_prob = 0.3;
    g.seed = Rng::mix(seed, i);
    if (g.faces > 1 && rng.bernoulli(0.5)) g.late_face_frame = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(g.frames) - 1));
    const SceneSequence scene = generate_scene(g);
    const Model model = init_model(net, RefinerConfig{}, Rng::mix(seed, 100 + i));

    GradCheckOptions check = opts.check;
    check.seed = Rng::mix(seed, 200 + i);
    const GradCheckResult r = grad_check(model.params, [&](Tape& tape, const ParamVars& vars) {
      return scene_forward(tape, scene, model, vars, LossWeights{}).total;
    }, check);

    ++report.instances;
    report.tensors += r.tensors;
    report.entries += r.entries.size();
    report.failures += r.failures;
    report.skipped += r.skipped;
    report.max_error = std::max(report.max_error, r.max_error);
    if (report.first_failure.empty()) {
      for (const GradCheckEntry& e : r.entries) {
        if (e.straddles_kink || e.error <= 1.0) continue;
        report.first_failure = fmt::format("{}/{}[{}] analytic={:.10g} numeric={:.10g}", i, e.tensor, e.index, e.analytic, e.numeric);
        break;
      }
    }
  }
  return report;
}

}  // namespace stmg
