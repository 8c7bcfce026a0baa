#pragma once

#include <vector>

#include "stmg/synthdata.hpp"
#include "stmg/tape.hpp"

namespace stmg {

inline constexpr double kLogEps = 1e-7;

struct LossWeights {
  double gamma1 = 0.5;  // attention loss inside the sound loss
  double gamma2 = 1.0;  // sound loss inside the total
  double beta1 = 0.1;   // NSS
  double beta2 = 1.0;   // CC
  /// Add NSS and CC to the objective as written instead of subtracting them as rewards.
  bool literal_sum = false;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Plain-value kernels, shared by the loss primitives and the evaluation metrics.

/// sum over x with G(x) > 0 of G log(G / max(S, eps)).
double kl_kernel(const Tensor& s, const Tensor& g, double eps = kLogEps);
/// sum_x P(x) * (S(x) - mean(S)) / std(S), population std. Throws DegenerateError for constant S.
double nss_kernel(const Tensor& s, const Tensor& p);
/// Pearson correlation of S and G. Throws DegenerateError if either is constant.
double cc_kernel(const Tensor& s, const Tensor& g);
/// Mean of -[y log p + (1-y) log(1-p)] with p clamped to [eps, 1-eps].
double bce_kernel(const Tensor& p, const std::vector<int>& y, double eps = kLogEps);
/// Mean of a log(a / max(b, eps)) with 0 log 0 = 0.
double att_kernel(const Tensor& gt, const Tensor& pre, double eps = kLogEps);

// Differentiable losses.

Var bce_loss(Var probs, const std::vector<int>& labels);
Var att_loss(const Tensor& alpha_gt, Var alpha_pre);
Var sound_loss(Var bce, Var att, double gamma1);
/// (1/T) sum_t KL(G_t || S_t). Maps must each sum to 1 within 1e-6 (ContractError otherwise).
Var kl_loss(const std::vector<Var>& s, const std::vector<Tensor>& g);
/// (1/T) sum_t NSS(S_t, P_t); a reward.
Var nss_loss(const std::vector<Var>& s, const std::vector<Tensor>& p);
/// (1/T) sum_t CC(S_t, G_t); a reward.
Var cc_loss(const std::vector<Var>& s, const std::vector<Tensor>& g);
/// kl - b1*nss - b2*cc, or kl + b1*nss + b2*cc when `literal_sum` is set.
Var saliency_loss(Var kl, Var nss, Var cc, const LossWeights& w);
Var total_loss(Var saliency, Var sound, double gamma2);

/// Fixation count map of one frame: P(x) = number of fixations on cell x.
Tensor fixation_map(const std::vector<Fixation>& fixations, const GridSpec& grid);

/// Ground-truth self-attention: per frame, the share of fixations falling in each
/// face region (nearest-center assignment), with off-face fixations going to the
/// visual node. Rows: frames; columns: faces then visual. Faces absent from a
/// frame get 0.
Tensor attention_target(const SceneSequence& scene);

}  // namespace stmg
