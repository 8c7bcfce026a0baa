#pragma once

#include <cstdint>

#include "stmg/gatnet.hpp"

namespace stmg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every tensor named in `grads`.
void adam_update(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace stmg
