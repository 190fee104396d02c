#pragma once

#include <filesystem>

#include "gait/train_config.hpp"

namespace gait {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Complete training snapshot. The on-disk format is:
///   magic "GAIT" | u32 version | u64 manifest length | manifest text |
///   u64 record count | records
/// where the manifest is "key = value" lines (floats as hexfloat so the
/// round trip is bit-exact) and each record is a length-prefixed
/// (name, shape, little-endian float64 payload) tensor.
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  int64_t step = 0;
  TrainConfig config;
  ParamMap gen_st;  // source -> target generator
  ParamMap gen_ts;  // target -> source generator
  ParamMap disc_s;  // discriminator for the source domain
  ParamMap disc_t;  // discriminator for the target domain
  AdamState adam_gen;
  AdamState adam_disc;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b);

}  // namespace gait
