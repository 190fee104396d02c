#pragma once

#include <cstdint>

#include "gait/adam.hpp"
#include "gait/gan_losses.hpp"
#include "gait/networks.hpp"

namespace gait {

struct TrainConfig {
  uint64_t seed = 0;
  int batch_size = 4;
  int64_t steps = 2000;
  int image_size = 32;
  int64_t checkpoint_every = 500;  // 0 disables intermediate checkpoints
  LossWeights weights;
  AdamConfig adam;
  GeneratorConfig gen;
  DiscriminatorConfig disc;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

}  // namespace gait
