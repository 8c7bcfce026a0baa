#include "stmg/report.hpp"

#include <fmt/format.h>

namespace stmg {

std::string format_epoch(const EpochLog& log) {
  const LossBreakdown& l = log.loss;
  return fmt::format(
      "epoch={} warmup={} steps={} total={:.6f} saliency={:.6f} sound={:.6f} bce={:.6f} att={:.6f} kl={:.6f} "
      "nss={:.6f} cc={:.6f}\n",
      log.epoch, log.warmup ? 1 : 0, log.steps, l.total, l.saliency, l.sound, l.bce, l.att, l.kl, l.nss, l.cc);
}

std::string format_analysis(const DatasetAnalysis& a) {
  std::string out;
  out += fmt::format("scenes={}\n", a.scenes);
  out += fmt::format("split_half_cc_mean={:.6f}\n", a.split_half_cc_mean);
  out += fmt::format("split_half_cc_std={:.6f}\n", a.split_half_cc_std);
  out += fmt::format("same_face={:.6f}\n", a.same_face);
  out += fmt::format("dispersion={:.6f}\n", a.dispersion);
  out += fmt::format("contextual_nss_speaking={:.6f}\n", a.nss_speaking);
  out += fmt::format("contextual_nss_silent={:.6f}\n", a.nss_silent);
  out += fmt::format("transition_frames={:.6f}\n", a.transition.mean_frames);
  out += fmt::format("transition_events={}\n", a.transition.events);
  out += fmt::format("transition_excluded={}\n", a.transition.excluded);
  return out;
}

}  // namespace stmg
