#include "gait/adam.hpp"

#include <cmath>

namespace gait {

namespace {

void update_one(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                const AdamConfig& cfg, double bc1, double bc2, const std::string& name) {
  if (grad.shape() != param.shape()) {
    throw ShapeError("adam_step: gradient shape " + shape_str(grad.shape()) +
                     " does not match parameter " + name + " " + shape_str(param.shape()));
  }
  auto g = grad.values();
  for (size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("adam_step: non-finite gradient for " + name);
    }
  }
  auto p = param.mutable_values();
  auto mv = m.mutable_values();
  auto vv = v.mutable_values();
  for (size_t i = 0; i < g.size(); ++i) {
    mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g[i];
    vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = mv[i] / bc1;
    const double v_hat = vv[i] / bc2;
    p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace

void adam_step(const std::vector<ParamGroup>& groups, const ParamMap& grads,
               AdamState& state) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.t));
  for (const auto& group : groups) {
    for (auto& [name, param] : group.params->entries()) {
      const std::string key = group.prefix.empty() ? name : group.prefix + "/" + name;
      if (!state.m.contains(key)) {
        state.m.add(key, Tensor::zeros(param.shape()));
        state.v.add(key, Tensor::zeros(param.shape()));
      }
      update_one(param, grads.at(key), state.m.at(key), state.v.at(key), state.cfg, bc1,
                 bc2, key);
    }
  }
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state) {
  adam_step({{std::string(), &params}}, grads, state);
}

}  // namespace gait
