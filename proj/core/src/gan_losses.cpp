#include "gait/gan_losses.hpp"

#include <cmath>

namespace gait {

void validate(const LossWeights& w) {
  if (!(w.c_ga > 0.0)) throw ConfigError("c_ga must be > 0");
  if (w.lambda_cyc < 0.0 || w.lambda_grad < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!std::isfinite(w.c_ga) || !std::isfinite(w.lambda_cyc) || !std::isfinite(w.lambda_grad)) {
    throw ConfigError("loss weights must be finite");
  }
}

Tensor adv_loss_generator(const Tensor& d_scores_on_fake) {
  return mean(square(add_scalar(d_scores_on_fake, -1.0)));
}

Tensor adv_loss_discriminator(const Tensor& d_scores_on_real,
                              const Tensor& d_scores_on_fake) {
  Tensor real_term = mean(square(add_scalar(d_scores_on_real, -1.0)));
  Tensor fake_term = mean(square(d_scores_on_fake));
  return add(scale(real_term, 0.5), scale(fake_term, 0.5));
}

Tensor cycle_consistency_loss(const Tensor& x, const Tensor& x_reconstructed,
                              const Tensor& y, const Tensor& y_reconstructed) {
  Tensor fwd = mean(abs(sub(x, x_reconstructed)));
  Tensor inv = mean(abs(sub(y, y_reconstructed)));
  return add(fwd, inv);
}

LossReport total_losses(LossReport parts, const LossWeights& w) {
  validate(w);
  const std::pair<const char*, double> terms[] = {
      {"adv_f_s", parts.adv_f_s}, {"adv_f_t", parts.adv_f_t},
      {"adv_d_s", parts.adv_d_s}, {"adv_d_t", parts.adv_d_t},
      {"cyc", parts.cyc},         {"grad", parts.grad},
  };
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite loss term: ") + name);
    }
  }
  parts.total_f =
      ((parts.adv_f_s + parts.adv_f_t) + w.lambda_cyc * parts.cyc) + w.lambda_grad * parts.grad;
  parts.total_d = parts.adv_d_s + parts.adv_d_t;
  return parts;
}

}  // namespace gait
