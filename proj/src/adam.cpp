#include "stmg/adam.hpp"

#include <cmath>

#include "stmg/error.hpp"

namespace stmg {

void AdamConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr: must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train.adam_eps: must be > 0");
}

void adam_update(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("adam_update: unknown parameter '" + name + "'");
    Tensor& p = it->second;
    if (g.shape() != p.shape()) throw DimensionError("adam_update: gradient shape mismatch for '" + name + "'");
    Tensor& m = state.m.try_emplace(name, p.shape()).first->second;
    Tensor& v = state.v.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace stmg
