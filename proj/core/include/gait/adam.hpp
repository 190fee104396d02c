#pragma once

#include "gait/networks.hpp"

namespace gait {

struct AdamConfig {
  double lr = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// First/second moment estimates per parameter, keyed by (prefixed) name;
/// lazily mirrored from the parameters on the first step.
struct AdamState {
  AdamConfig cfg;
  int64_t t = 0;
  ParamMap m;
  ParamMap v;
};

/// Standard bias-corrected Adam update, in place:
///   p -= lr * m_hat / (sqrt(v_hat) + eps)
/// `grads` must hold a gradient for every parameter name.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state);

/// Multi-network variant: updates several parameter maps under one state
/// (one shared step counter). Names are keyed "<prefix>/<param>" in both
/// `grads` and the state's moments.
struct ParamGroup {
  std::string prefix;
  ParamMap* params;
};
void adam_step(const std::vector<ParamGroup>& groups, const ParamMap& grads,
               AdamState& state);

}  // namespace gait
