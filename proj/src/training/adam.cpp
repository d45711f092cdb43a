#include <cmath>

#include "nwq/training.hpp"

namespace nwq {

AdamState AdamState::for_parameters(const Parameters<float>& params) {
  AdamState s;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.size(), 0.0f);
    s.v.emplace_back(t.size(), 0.0f);
  }
  return s;
}

void adam_step(Parameters<float>& params, AdamState& state, double lr, double beta1, double beta2,
               double epsilon) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter set");
  }
  // Validate every gradient before touching anything, so a failure leaves the model intact.
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (float g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  std::size_t k = 0;
  for (auto& [name, tensor] : params) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    ++k;
    if (m.size() != tensor.size()) throw ContractError("adam_step: moment size mismatch for " + name);
    auto w = tensor.mutable_values();
    const auto g = tensor.grad();
    const bool has = tensor.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + epsilon));
    }
  }
}

}  // namespace nwq
