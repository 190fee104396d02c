#pragma once

#include <filesystem>
#include <span>

#include "gait/checkpoint.hpp"
#include "gait/gradient_adjustment.hpp"

namespace gait {

/// The four networks of the dual-translation system.
struct Models {
  GeneratorConfig gen_cfg;
  DiscriminatorConfig disc_cfg;
  ParamMap gen_st;
  ParamMap gen_ts;
  ParamMap disc_s;
  ParamMap disc_t;
};

struct OptStates {
  AdamState gen;
  AdamState disc;
};

Models init_models(const TrainConfig& cfg);

/// One alternating optimization step:
///  1. forward both translations and reconstructions, assemble the full
///     generator objective, update both generators;
///  2. re-score real images and detached fakes, update both discriminators.
/// Throws NumericError naming the first non-finite loss term.
LossReport train_step(const Tensor& batch_s, const Tensor& batch_t, Models& models,
                      OptStates& states, const LossWeights& w);

/// Per-epoch shuffled index order for one domain; a pure function of
/// (seed, domain_tag, epoch), so resuming needs no sampler state beyond the
/// step counter.
std::vector<size_t> epoch_permutation(uint64_t seed, uint64_t domain_tag, int64_t epoch,
                                      size_t n);

/// Stacks [C,H,W] images into a [B,C,H,W] batch.
Tensor stack_batch(const std::vector<Tensor>& images, std::span<const size_t> indices);

inline constexpr uint64_t kDomainSourceTag = 'S';
inline constexpr uint64_t kDomainTargetTag = 'T';

/// Runs `cfg.steps` train steps over unpaired, independently shuffled
/// batches. Writes `loss_log.csv` (one row per executed step) and periodic +
/// final checkpoints into `out_dir`. Pass `resume` to continue a run; the
/// loss log then contains rows (resume->step, cfg.steps].
Checkpoint train_loop(const TrainConfig& cfg, const std::vector<Tensor>& dataset_s,
                      const std::vector<Tensor>& dataset_t,
                      const std::filesystem::path& out_dir,
                      const Checkpoint* resume = nullptr);

inline constexpr const char* kLossCsvHeader =
    "step,adv_f_s,adv_f_t,adv_d_s,adv_d_t,cyc,grad,total_f,total_d";

}  // namespace gait
