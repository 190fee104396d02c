#pragma once

#include "gait/ops.hpp"

namespace gait {

/// Weights of the total generator objective; c_ga scales the source Sobel
/// response (multiplies in the forward direction, divides in the inverse).
struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_grad = 630.0;
  double c_ga = 1.0;

  bool operator==(const LossWeights&) const = default;
};

void validate(const LossWeights& w);

/// Per-step scalar loss terms plus their weighted totals.
struct LossReport {
  double adv_f_s = 0;  // generator adversarial, source->target direction
  double adv_f_t = 0;  // generator adversarial, target->source direction
  double adv_d_s = 0;  // discriminator loss judged by D_T (source-origin fakes)
  double adv_d_t = 0;  // discriminator loss judged by D_S (target-origin fakes)
  double cyc = 0;
  double grad = 0;
  double total_f = 0;
  double total_d = 0;
};

/// mean((scores - 1)^2)
Tensor adv_loss_generator(const Tensor& d_scores_on_fake);

/// 0.5 * mean((real - 1)^2) + 0.5 * mean(fake^2)
Tensor adv_loss_discriminator(const Tensor& d_scores_on_real,
                              const Tensor& d_scores_on_fake);

/// mean|x - x_rec| + mean|y - y_rec|
Tensor cycle_consistency_loss(const Tensor& x, const Tensor& x_reconstructed,
                              const Tensor& y, const Tensor& y_reconstructed);

/// Fills total_f / total_d from the part terms:
///   total_f = adv_f_s + adv_f_t + lambda_cyc*cyc + lambda_grad*grad
///   total_d = adv_d_s + adv_d_t
/// Throws NumericError naming the first non-finite part.
LossReport total_losses(LossReport parts, const LossWeights& w);

}  // namespace gait
