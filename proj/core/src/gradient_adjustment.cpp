#include "gait/gradient_adjustment.hpp"

#include <memory>

namespace gait {

const SobelKernels& sobel_kernels() {
  static const SobelKernels k{
      Tensor({1, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1}),
      Tensor({1, 1, 3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1}),
  };
  return k;
}

namespace {

inline int64_t refl(int64_t t, int64_t len) {
  if (t < 0) return -t;
  if (t >= len) return 2 * len - 2 - t;
  return t;
}

// The responses are accumulated as paired differences (each pair carries one
// +w and one -w kernel tap), which keeps constant images at exactly zero.
void sobel_forward(const double* x, int64_t NC, int64_t H, int64_t W, bool horizontal,
                   double* out) {
  for (int64_t nc = 0; nc < NC; ++nc) {
    const double* src = x + nc * H * W;
    double* dst = out + nc * H * W;
    for (int64_t i = 0; i < H; ++i) {
      const int64_t im = refl(i - 1, H) * W, i0 = i * W, ip = refl(i + 1, H) * W;
      for (int64_t j = 0; j < W; ++j) {
        const int64_t jm = refl(j - 1, W), jp = refl(j + 1, W);
        double r;
        if (horizontal) {
          r = (src[im + jp] - src[im + jm]) + 2.0 * (src[i0 + jp] - src[i0 + jm]) +
              (src[ip + jp] - src[ip + jm]);
        } else {
          r = (src[ip + jm] - src[im + jm]) + 2.0 * (src[ip + j] - src[im + j]) +
              (src[ip + jp] - src[im + jp]);
        }
        dst[i0 + j] = r;
      }
    }
  }
}

void sobel_adjoint(const double* g, int64_t NC, int64_t H, int64_t W, bool horizontal,
                   double* dx_accum) {
  for (int64_t nc = 0; nc < NC; ++nc) {
    const double* src = g + nc * H * W;
    double* dst = dx_accum + nc * H * W;
    for (int64_t i = 0; i < H; ++i) {
      const int64_t im = refl(i - 1, H) * W, i0 = i * W, ip = refl(i + 1, H) * W;
      for (int64_t j = 0; j < W; ++j) {
        const double gv = src[i0 + j];
        if (gv == 0.0) continue;
        const int64_t jm = refl(j - 1, W), jp = refl(j + 1, W);
        if (horizontal) {
          dst[im + jp] += gv;
          dst[im + jm] -= gv;
          dst[i0 + jp] += 2.0 * gv;
          dst[i0 + jm] -= 2.0 * gv;
          dst[ip + jp] += gv;
          dst[ip + jm] -= gv;
        } else {
          dst[ip + jm] += gv;
          dst[im + jm] -= gv;
          dst[ip + j] += 2.0 * gv;
          dst[im + j] -= 2.0 * gv;
          dst[ip + jp] += gv;
          dst[im + jp] -= gv;
        }
      }
    }
  }
}

Tensor sobel_filter(const Tensor& image, bool horizontal) {
  if (image.shape().size() != 4) {
    throw ShapeError("sobel_response: need rank-4 input, got " + shape_str(image.shape()));
  }
  const int64_t N = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  if (H < 3 || W < 3) {
    throw ShapeError("sobel_response: image smaller than 3x3: " + shape_str(image.shape()));
  }
  std::vector<double> out(static_cast<size_t>(image.numel()));
  sobel_forward(image.values().data(), N * C, H, W, horizontal, out.data());
  Tensor res(image.shape(), std::move(out));
  if (Tape* tp = Tape::active(); tp && tp->tracked(image)) {
    int nx = tp->node_of(image);
    const char* name = horizontal ? "sobel_h" : "sobel_v";
    int id = tp->record(name, res.shape(), {nx},
                        [nx, N, C, H, W, horizontal](std::span<const double> g, Tape& t) {
                          sobel_adjoint(g.data(), N * C, H, W, horizontal,
                                        t.grad_buffer(nx));
                        });
    tp->bind(res, id);
  }
  return res;
}

}  // namespace

SobelResponse sobel_response(const Tensor& image) {
  return {sobel_filter(image, true), sobel_filter(image, false)};
}

Tensor gradient_adjustment_loss(const Tensor& x, const Tensor& fx, const Tensor& y,
                                const Tensor& fy_inv, double c_ga) {
  if (!(c_ga > 0.0)) throw ConfigError("gradient_adjustment_loss: c_ga must be > 0");
  if (x.shape() != fx.shape()) {
    throw ShapeError("gradient_adjustment_loss: x " + shape_str(x.shape()) +
                     " vs translation " + shape_str(fx.shape()));
  }
  if (y.shape() != fy_inv.shape()) {
    throw ShapeError("gradient_adjustment_loss: y " + shape_str(y.shape()) +
                     " vs translation " + shape_str(fy_inv.shape()));
  }
  SobelResponse rx = sobel_response(x);
  SobelResponse rfx = sobel_response(fx);
  SobelResponse ry = sobel_response(y);
  SobelResponse rfy = sobel_response(fy_inv);

  Tensor fwd_h = mean(square(sub(scale(rx.horizontal, c_ga), rfx.horizontal)));
  Tensor fwd_v = mean(square(sub(scale(rx.vertical, c_ga), rfx.vertical)));
  Tensor inv_h = mean(square(sub(scale(ry.horizontal, 1.0 / c_ga), rfy.horizontal)));
  Tensor inv_v = mean(square(sub(scale(ry.vertical, 1.0 / c_ga), rfy.vertical)));
  return add(add(fwd_h, fwd_v), add(inv_h, inv_v));
}

double optimal_cga(const Tensor& x, const Tensor& fx) {
  if (x.shape() != fx.shape()) {
    throw ShapeError("optimal_cga: x " + shape_str(x.shape()) + " vs translation " +
                     shape_str(fx.shape()));
  }
  SobelResponse rx = sobel_response(x.detach());
  SobelResponse rfx = sobel_response(fx.detach());
  double dot = 0.0, den = 0.0;
  for (auto [rs, rf] : {std::pair{&rx.horizontal, &rfx.horizontal},
                        std::pair{&rx.vertical, &rfx.vertical}}) {
    auto vs = rs->values();
    auto vf = rf->values();
    for (size_t i = 0; i < vs.size(); ++i) {
      dot += vs[i] * vf[i];
      den += vs[i] * vs[i];
    }
  }
  if (den == 0.0) {
    throw NumericError("optimal_cga: constant image has zero Sobel response");
  }
  return dot / den;
}

}  // namespace gait
