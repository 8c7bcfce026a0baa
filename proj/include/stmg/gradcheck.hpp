#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stmg/gatnet.hpp"
#include "stmg/tape.hpp"

namespace stmg {

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
  /// Entries checked per tensor; every entry when the tensor is smaller.
  std::size_t samples_per_tensor = 3;
  /// Times the step may be divided by 10 while probes straddle a kink or
  /// successive estimates still disagree.
  std::size_t max_shrinks = 3;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;  // see gradient_error
  bool straddles_kink = false;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  std::size_t tensors = 0;
  std::size_t failures = 0;
  /// Entries that still straddled a kink after all shrinks; not counted as failures.
  std::size_t skipped = 0;
  double max_error = 0.0;
  bool passed() const { return failures == 0; }
};

/// Builds the scalar objective on `tape` from parameters bound to it.
using ScalarObjective = std::function<Var(Tape& tape, const ParamVars& params)>;

/// Compares reverse-mode gradients of `objective` with central finite
/// differences on sampled entries of every tensor in `params`.
GradCheckResult grad_check(const ParamStore& params, const ScalarObjective& objective, const GradCheckOptions& opts = {});

struct PipelineCheckOptions {
  std::size_t instances = 20;
  std::size_t max_faces = 4;
  std::size_t max_frames = 6;
  std::size_t width = 16;
  std::size_t height = 12;
  GradCheckOptions check;
};

struct PipelineCheckReport {
  std::size_t instances = 0;
  std::size_t tensors = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  std::size_t skipped = 0;
  double max_error = 0.0;
  /// First failing entry, if any, as "instance/tensor[index] analytic numeric".
  std::string first_failure;
  bool passed() const { return failures == 0 && instances > 0; }
};

/// Gradient check of the full objective (network, classifier heads and
/// refiner) on random scenes with 1..max_faces faces and 2..max_frames frames.
PipelineCheckReport pipeline_grad_check(const NetworkConfig& net, std::uint64_t seed,
                                        const PipelineCheckOptions& opts = {});

/// |a - n| / (abs_floor + rel_tol * max(|a|, |n|)); an entry passes when this is at most 1.
double gradient_error(double analytic, double numeric, double rel_tol, double abs_floor);

}  // namespace stmg
