#pragma once

#include "gait/ops.hpp"

namespace gait {

/// The 3x3 derivative-approximation kernels, applied un-flipped
/// (cross-correlation):
///   s_h = [[-1,0,1],[-2,0,2],[-1,0,1]],  s_v = s_h^T
struct SobelKernels {
  Tensor horizontal;  // [1,1,3,3]
  Tensor vertical;    // [1,1,3,3]
};

const SobelKernels& sobel_kernels();

/// Paired horizontal/vertical derivative maps, same shape as the image.
struct SobelResponse {
  Tensor horizontal;
  Tensor vertical;
};

/// Per-channel cross-correlation with s_h and s_v under reflect padding 1.
/// Differentiable; H, W >= 3 required. The stencil accumulates paired
/// differences, so constant images yield exactly zero.
SobelResponse sobel_response(const Tensor& image);

/// Mean-squared Sobel mismatch over both directions of the translation pair:
///   mean|S_h(x)*c - S_h(fx)|^2 + mean|S_v(x)*c - S_v(fx)|^2
/// + mean|S_h(y)/c - S_h(fy_inv)|^2 + mean|S_v(y)/c - S_v(fy_inv)|^2
/// The forward direction multiplies by c_ga, the inverse direction divides.
/// Gradients flow into fx and fy_inv (x, y are inputs and act as constants).
Tensor gradient_adjustment_loss(const Tensor& x, const Tensor& fx, const Tensor& y,
                                const Tensor& fy_inv, double c_ga);

/// Closed-form minimizer of || S(x)*c - S(fx) ||^2 over c, concatenating the
/// horizontal and vertical responses:
///   c* = <S(x), S(fx)> / ||S(x)||^2
/// Throws for constant x (zero denominator).
double optimal_cga(const Tensor& x, const Tensor& fx);

}  // namespace gait
