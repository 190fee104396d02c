#pragma once

#include "gait/tensor.hpp"

namespace gait {

// Elementwise ops. Binary ops require exactly equal shapes (no
// broadcasting); scalar variants take a plain double.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);

// Reductions to a scalar tensor (shape {1}).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Activations.
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);
Tensor tanh_op(const Tensor& a);

/// Copies data into a new shape with the same element count.
Tensor reshape(const Tensor& a, Shape new_shape);

/// y[n,c,:,:] = x[n,c,:,:] + b[c]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

enum class PadMode { Zero, Reflect };

struct Pad2d {
  PadMode mode = PadMode::Zero;
  int amount = 0;
};

inline Pad2d zero_pad(int p) { return {PadMode::Zero, p}; }
inline Pad2d reflect_pad(int p) { return {PadMode::Reflect, p}; }

/// Reflect-padding (border not repeated), p <= H-1 and p <= W-1.
Tensor reflect_pad2d(const Tensor& x, int p);

/// 2-D cross-correlation (kernel applied un-flipped).
/// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw] -> [N,Cout,H',W'] with
/// H' = floor((H + 2p - kh)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Pad2d pad);

/// Adjoint of conv2d with the same (kernel, stride, pad):
/// <conv2d(a,k), b> == <a, conv2d_transpose(b,k)> whenever shapes
/// round-trip. output_padding (< stride) disambiguates the output extent
/// lost to the floor in conv2d's shape formula:
/// H = (H'-1)*stride - 2p + kh + output_padding.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, int stride,
                        Pad2d pad, int output_padding = 0);

/// Per (sample, channel) normalization over the spatial dims:
/// (x - mean) / sqrt(var + eps) * scale + shift, scale/shift shaped [C].
Tensor instance_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                     double eps = 1e-5);

}  // namespace gait
