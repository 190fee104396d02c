#include "gait/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

namespace gait {

namespace {

// Single-threaded BLAS: per-element summation order is then fixed, which the
// byte-exact determinism contracts rely on.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit g_blas_init;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void check_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor");
}

void debug_check(const char* op, const Tensor& t) {
  if (debug_checks_enabled()) check_all_finite(op, t.values());
}

// Returns the active tape if any input is tracked on it, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tp = Tape::active();
  if (!tp) return nullptr;
  for (const Tensor* t : inputs) {
    if (tp->tracked(*t)) return tp;
  }
  return nullptr;
}

Tensor make_unary(const char* op, const Tensor& a, std::vector<double> out_values,
                  std::function<void(std::span<const double>, std::span<double>)> pullback) {
  Tensor out(a.shape(), std::move(out_values));
  if (Tape* tp = recording_tape({&a})) {
    int na = tp->node_of(a);
    int id = tp->record(op, out.shape(), {na},
                        [na, pb = std::move(pullback), n = a.numel()](
                            std::span<const double> g, Tape& t) {
                          std::span<double> dst(t.grad_buffer(na), static_cast<size_t>(n));
                          pb(g, dst);
                        });
    tp->bind(out, id);
  }
  debug_check(op, out);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined("add", a);
  check_defined("add", b);
  check_same_shape("add", a, b);
  auto va = a.values(), vb = b.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  Tensor res(a.shape(), std::move(out));
  if (Tape* tp = recording_tape({&a, &b})) {
    int na = tp->node_of(a), nb = tp->node_of(b);
    int id = tp->record("add", res.shape(), {na, nb},
                        [na, nb](std::span<const double> g, Tape& t) {
                          if (na >= 0) t.accumulate(na, g);
                          if (nb >= 0) t.accumulate(nb, g);
                        });
    tp->bind(res, id);
  }
  debug_check("add", res);
  return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined("sub", a);
  check_defined("sub", b);
  check_same_shape("sub", a, b);
  auto va = a.values(), vb = b.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  Tensor res(a.shape(), std::move(out));
  if (Tape* tp = recording_tape({&a, &b})) {
    int na = tp->node_of(a), nb = tp->node_of(b);
    int id = tp->record("sub", res.shape(), {na, nb},
                        [na, nb](std::span<const double> g, Tape& t) {
                          if (na >= 0) t.accumulate(na, g);
                          if (nb >= 0) {
                            double* dst = t.grad_buffer(nb);
                            for (size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
                          }
                        });
    tp->bind(res, id);
  }
  debug_check("sub", res);
  return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined("mul", a);
  check_defined("mul", b);
  check_same_shape("mul", a, b);
  auto va = a.values(), vb = b.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  Tensor res(a.shape(), std::move(out));
  if (Tape* tp = recording_tape({&a, &b})) {
    int na = tp->node_of(a), nb = tp->node_of(b);
    int id = tp->record("mul", res.shape(), {na, nb},
                        [na, nb, a, b](std::span<const double> g, Tape& t) {
                          if (na >= 0) {
                            double* dst = t.grad_buffer(na);
                            auto vb2 = b.values();
                            for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * vb2[i];
                          }
                          if (nb >= 0) {
                            double* dst = t.grad_buffer(nb);
                            auto va2 = a.values();
                            for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * va2[i];
                          }
                        });
    tp->bind(res, id);
  }
  debug_check("mul", res);
  return res;
}

Tensor square(const Tensor& a) {
  check_defined("square", a);
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] * va[i];
  return make_unary("square", a, std::move(out),
                    [a](std::span<const double> g, std::span<double> dst) {
                      auto v = a.values();
                      for (size_t i = 0; i < g.size(); ++i) dst[i] += 2.0 * v[i] * g[i];
                    });
}

Tensor abs(const Tensor& a) {
  check_defined("abs", a);
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(va[i]);
  return make_unary("abs", a, std::move(out),
                    [a](std::span<const double> g, std::span<double> dst) {
                      auto v = a.values();
                      for (size_t i = 0; i < g.size(); ++i) {
                        double s = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
                        dst[i] += s * g[i];
                      }
                    });
}

Tensor scale(const Tensor& a, double s) {
  check_defined("scale", a);
  if (!std::isfinite(s)) throw NumericError("scale: non-finite scalar");
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] * s;
  return make_unary("scale", a, std::move(out),
                    [s](std::span<const double> g, std::span<double> dst) {
                      for (size_t i = 0; i < g.size(); ++i) dst[i] += s * g[i];
                    });
}

Tensor add_scalar(const Tensor& a, double c) {
  check_defined("add_scalar", a);
  if (!std::isfinite(c)) throw NumericError("add_scalar: non-finite scalar");
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] + c;
  return make_unary("add_scalar", a, std::move(out),
                    [](std::span<const double> g, std::span<double> dst) {
                      for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  check_defined("sum", a);
  if (a.numel() == 0) throw ShapeError("sum: empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  std::vector<double> out{acc};
  return make_unary("sum", a, std::move(out),
                    [](std::span<const double> g, std::span<double> dst) {
                      for (double& d : dst) d += g[0];
                    });
}

Tensor mean(const Tensor& a) {
  check_defined("mean", a);
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  std::vector<double> out{acc * inv};
  return make_unary("mean", a, std::move(out),
                    [inv](std::span<const double> g, std::span<double> dst) {
                      for (double& d : dst) d += g[0] * inv;
                    });
}

// ---------------------------------------------------------------------------
// Activations

Tensor relu(const Tensor& a) {
  check_defined("relu", a);
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
  return make_unary("relu", a, std::move(out),
                    [a](std::span<const double> g, std::span<double> dst) {
                      auto v = a.values();
                      for (size_t i = 0; i < g.size(); ++i) {
                        if (v[i] > 0.0) dst[i] += g[i];
                      }
                    });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  check_defined("leaky_relu", a);
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = va[i] > 0.0 ? va[i] : negative_slope * va[i];
  return make_unary("leaky_relu", a, std::move(out),
                    [a, negative_slope](std::span<const double> g, std::span<double> dst) {
                      auto v = a.values();
                      for (size_t i = 0; i < g.size(); ++i)
                        dst[i] += (v[i] > 0.0 ? 1.0 : negative_slope) * g[i];
                    });
}

Tensor tanh_op(const Tensor& a) {
  check_defined("tanh", a);
  auto va = a.values();
  std::vector<double> out(va.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
  Tensor res(a.shape(), std::move(out));
  if (Tape* tp = recording_tape({&a})) {
    int na = tp->node_of(a);
    // capture the output values: d tanh = 1 - y^2
    Tensor y = res.detach();
    int id = tp->record("tanh", res.shape(), {na},
                        [na, y](std::span<const double> g, Tape& t) {
                          double* dst = t.grad_buffer(na);
                          auto vy = y.values();
                          for (size_t i = 0; i < g.size(); ++i)
                            dst[i] += (1.0 - vy[i] * vy[i]) * g[i];
                        });
    tp->bind(res, id);
  }
  debug_check("tanh", res);
  return res;
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor reshape(const Tensor& a, Shape new_shape) {
  check_defined("reshape", a);
  if (shape_numel(new_shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(new_shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  Tensor res(std::move(new_shape), std::move(out));
  if (Tape* tp = recording_tape({&a})) {
    int na = tp->node_of(a);
    int id = tp->record("reshape", res.shape(), {na},
                        [na](std::span<const double> g, Tape& t) { t.accumulate(na, g); });
    tp->bind(res, id);
  }
  return res;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  check_defined("add_channel_bias", x);
  check_defined("add_channel_bias", bias);
  if (x.shape().size() != 4 || bias.shape().size() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("add_channel_bias: need x [N,C,H,W] and bias [C], got " +
                     shape_str(x.shape()) + " and " + shape_str(bias.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  auto vx = x.values();
  auto vb = bias.values();
  std::vector<double> out(vx.size());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double b = vb[static_cast<size_t>(c)];
      const size_t base = static_cast<size_t>((n * C + c) * P);
      for (int64_t p = 0; p < P; ++p) out[base + p] = vx[base + p] + b;
    }
  Tensor res(x.shape(), std::move(out));
  if (Tape* tp = recording_tape({&x, &bias})) {
    int nx = tp->node_of(x), nb = tp->node_of(bias);
    int id = tp->record("add_channel_bias", res.shape(), {nx, nb},
                        [nx, nb, N, C, P](std::span<const double> g, Tape& t) {
                          if (nx >= 0) t.accumulate(nx, g);
                          if (nb >= 0) {
                            double* dst = t.grad_buffer(nb);
                            for (int64_t n = 0; n < N; ++n)
                              for (int64_t c = 0; c < C; ++c) {
                                const size_t base = static_cast<size_t>((n * C + c) * P);
                                double acc = 0.0;
                                for (int64_t p = 0; p < P; ++p) acc += g[base + p];
                                dst[c] += acc;
                              }
                          }
                        });
    tp->bind(res, id);
  }
  debug_check("add_channel_bias", res);
  return res;
}

// ---------------------------------------------------------------------------
// Reflect padding

namespace {

inline int64_t reflect_index(int64_t t, int64_t len) {
  if (t < 0) return -t;
  if (t >= len) return 2 * len - 2 - t;
  return t;
}

void reflect_pad_forward(const double* x, int64_t NC, int64_t H, int64_t W, int64_t p,
                         double* out) {
  const int64_t Hp = H + 2 * p, Wp = W + 2 * p;
  for (int64_t nc = 0; nc < NC; ++nc) {
    const double* src = x + nc * H * W;
    double* dst = out + nc * Hp * Wp;
    for (int64_t u = 0; u < Hp; ++u) {
      const int64_t h = reflect_index(u - p, H);
      for (int64_t v = 0; v < Wp; ++v) {
        dst[u * Wp + v] = src[h * W + reflect_index(v - p, W)];
      }
    }
  }
}

// adjoint: fold padded gradient back onto the unpadded grid
void reflect_pad_adjoint(const double* g, int64_t NC, int64_t H, int64_t W, int64_t p,
                         double* dst_accum) {
  const int64_t Hp = H + 2 * p, Wp = W + 2 * p;
  for (int64_t nc = 0; nc < NC; ++nc) {
    const double* src = g + nc * Hp * Wp;
    double* dst = dst_accum + nc * H * W;
    for (int64_t u = 0; u < Hp; ++u) {
      const int64_t h = reflect_index(u - p, H);
      for (int64_t v = 0; v < Wp; ++v) {
        dst[h * W + reflect_index(v - p, W)] += src[u * Wp + v];
      }
    }
  }
}

}  // namespace

Tensor reflect_pad2d(const Tensor& x, int p) {
  check_defined("reflect_pad2d", x);
  if (x.shape().size() != 4) {
    throw ShapeError("reflect_pad2d: need rank-4 input, got " + shape_str(x.shape()));
  }
  if (p < 0) throw ShapeError("reflect_pad2d: negative padding");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (p > H - 1 || p > W - 1) {
    throw ShapeError("reflect_pad2d: padding " + std::to_string(p) +
                     " too large for input " + shape_str(x.shape()));
  }
  Shape out_shape{N, C, H + 2 * p, W + 2 * p};
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  reflect_pad_forward(x.values().data(), N * C, H, W, p, out.data());
  Tensor res(out_shape, std::move(out));
  if (Tape* tp = recording_tape({&x})) {
    int nx = tp->node_of(x);
    int id = tp->record("reflect_pad2d", res.shape(), {nx},
                        [nx, N, C, H, W, p](std::span<const double> g, Tape& t) {
                          reflect_pad_adjoint(g.data(), N * C, H, W, p, t.grad_buffer(nx));
                        });
    tp->bind(res, id);
  }
  debug_check("reflect_pad2d", res);
  return res;
}

// ---------------------------------------------------------------------------
// Convolution primitives (zero padding); im2col + dgemm

namespace {

struct ConvDims {
  int64_t N, Cin, H, W, Cout, kh, kw, Ho, Wo;
  int s, p;
};

ConvDims conv_dims(const char* op, const Tensor& input, const Tensor& kernel, int stride,
                   int p) {
  if (input.shape().size() != 4 || kernel.shape().size() != 4) {
    throw ShapeError(std::string(op) + ": input and kernel must be rank 4, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (p < 0) throw ShapeError(std::string(op) + ": negative padding");
  ConvDims d{};
  d.N = input.dim(0);
  d.Cin = input.dim(1);
  d.H = input.dim(2);
  d.W = input.dim(3);
  d.Cout = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  d.s = stride;
  d.p = p;
  if (kernel.dim(1) != d.Cin) {
    throw ShapeError(std::string(op) + ": channel mismatch, input " +
                     shape_str(input.shape()) + " vs kernel " + shape_str(kernel.shape()));
  }
  if (d.H + 2 * p < d.kh || d.W + 2 * p < d.kw) {
    throw ShapeError(std::string(op) + ": kernel " + shape_str(kernel.shape()) +
                     " larger than padded input " + shape_str(input.shape()) +
                     " (pad " + std::to_string(p) + ")");
  }
  d.Ho = (d.H + 2 * p - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * p - d.kw) / stride + 1;
  return d;
}

// col: [Cin*kh*kw, Ho*Wo]; zero padding realized via bounds checks
void im2col(const double* x, const ConvDims& d, double* col) {
  const int64_t HoWo = d.Ho * d.Wo;
  for (int64_t ci = 0; ci < d.Cin; ++ci) {
    const double* xc = x + ci * d.H * d.W;
    for (int64_t a = 0; a < d.kh; ++a) {
      for (int64_t b = 0; b < d.kw; ++b) {
        double* row = col + ((ci * d.kh + a) * d.kw + b) * HoWo;
        for (int64_t i = 0; i < d.Ho; ++i) {
          const int64_t h = i * d.s + a - d.p;
          double* out_row = row + i * d.Wo;
          if (h < 0 || h >= d.H) {
            std::memset(out_row, 0, static_cast<size_t>(d.Wo) * sizeof(double));
            continue;
          }
          const double* src = xc + h * d.W;
          for (int64_t j = 0; j < d.Wo; ++j) {
            const int64_t w = j * d.s + b - d.p;
            out_row[j] = (w >= 0 && w < d.W) ? src[w] : 0.0;
          }
        }
      }
    }
  }
}

// scatter-add the col layout back onto the (unpadded) image grid
void col2im_add(const double* col, const ConvDims& d, double* x_accum) {
  const int64_t HoWo = d.Ho * d.Wo;
  for (int64_t ci = 0; ci < d.Cin; ++ci) {
    double* xc = x_accum + ci * d.H * d.W;
    for (int64_t a = 0; a < d.kh; ++a) {
      for (int64_t b = 0; b < d.kw; ++b) {
        const double* row = col + ((ci * d.kh + a) * d.kw + b) * HoWo;
        for (int64_t i = 0; i < d.Ho; ++i) {
          const int64_t h = i * d.s + a - d.p;
          if (h < 0 || h >= d.H) continue;
          double* dst = xc + h * d.W;
          const double* src = row + i * d.Wo;
          for (int64_t j = 0; j < d.Wo; ++j) {
            const int64_t w = j * d.s + b - d.p;
            if (w >= 0 && w < d.W) dst[w] += src[j];
          }
        }
      }
    }
  }
}

// y[n] = K [Cout, Cin*kh*kw] x col(x[n])
void conv_forward_raw(const double* x, const double* k, const ConvDims& d, double* y) {
  const int64_t CKK = d.Cin * d.kh * d.kw;
  const int64_t HoWo = d.Ho * d.Wo;
  std::vector<double> col(static_cast<size_t>(CKK * HoWo));
  for (int64_t n = 0; n < d.N; ++n) {
    im2col(x + n * d.Cin * d.H * d.W, d, col.data());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(d.Cout),
                static_cast<int>(HoWo), static_cast<int>(CKK), 1.0, k,
                static_cast<int>(CKK), col.data(), static_cast<int>(HoWo), 0.0,
                y + n * d.Cout * HoWo, static_cast<int>(HoWo));
  }
}

// dK += sum_n g[n] x col(x[n])^T
void conv_kernel_grad_raw(const double* x, const double* g, const ConvDims& d,
                          double* dk_accum) {
  const int64_t CKK = d.Cin * d.kh * d.kw;
  const int64_t HoWo = d.Ho * d.Wo;
  std::vector<double> col(static_cast<size_t>(CKK * HoWo));
  for (int64_t n = 0; n < d.N; ++n) {
    im2col(x + n * d.Cin * d.H * d.W, d, col.data());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(d.Cout),
                static_cast<int>(CKK), static_cast<int>(HoWo), 1.0, g + n * d.Cout * HoWo,
                static_cast<int>(HoWo), col.data(), static_cast<int>(HoWo), 1.0, dk_accum,
                static_cast<int>(CKK));
  }
}

// dx[n] += col2im(K^T x g[n])
void conv_input_grad_raw(const double* g, const double* k, const ConvDims& d,
                         double* dx_accum) {
  const int64_t CKK = d.Cin * d.kh * d.kw;
  const int64_t HoWo = d.Ho * d.Wo;
  std::vector<double> col(static_cast<size_t>(CKK * HoWo));
  for (int64_t n = 0; n < d.N; ++n) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(CKK),
                static_cast<int>(HoWo), static_cast<int>(d.Cout), 1.0, k,
                static_cast<int>(CKK), g + n * d.Cout * HoWo, static_cast<int>(HoWo), 0.0,
                col.data(), static_cast<int>(HoWo));
    col2im_add(col.data(), d, dx_accum + n * d.Cin * d.H * d.W);
  }
}

Tensor conv2d_zero(const Tensor& input, const Tensor& kernel, int stride, int p) {
  const ConvDims d = conv_dims("conv2d", input, kernel, stride, p);
  Shape out_shape{d.N, d.Cout, d.Ho, d.Wo};
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  conv_forward_raw(input.values().data(), kernel.values().data(), d, out.data());
  Tensor res(out_shape, std::move(out));
  if (Tape* tp = recording_tape({&input, &kernel})) {
    int nx = tp->node_of(input), nk = tp->node_of(kernel);
    int id = tp->record("conv2d", res.shape(), {nx, nk},
                        [nx, nk, d, input, kernel](std::span<const double> g, Tape& t) {
                          if (nx >= 0) {
                            conv_input_grad_raw(g.data(), kernel.values().data(), d,
                                                t.grad_buffer(nx));
                          }
                          if (nk >= 0) {
                            conv_kernel_grad_raw(input.values().data(), g.data(), d,
                                                 t.grad_buffer(nk));
                          }
                        });
    tp->bind(res, id);
  }
  debug_check("conv2d", res);
  return res;
}

// Adjoint of conv2d_zero as a forward op. The ConvDims describe the
// *underlying* convolution whose adjoint this computes.
Tensor conv2d_transpose_zero(const Tensor& input, const Tensor& kernel, int stride, int p,
                             int output_padding) {
  if (input.shape().size() != 4 || kernel.shape().size() != 4) {
    throw ShapeError("conv2d_transpose: input and kernel must be rank 4, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d_transpose: stride must be >= 1");
  if (output_padding < 0 || output_padding >= stride) {
    throw ShapeError("conv2d_transpose: output_padding must be in [0, stride)");
  }
  if (input.dim(1) != kernel.dim(0)) {
    throw ShapeError("conv2d_transpose: channel mismatch, input " +
                     shape_str(input.shape()) + " vs kernel " + shape_str(kernel.shape()));
  }
  ConvDims d{};
  d.N = input.dim(0);
  d.Cout = kernel.dim(0);
  d.Cin = kernel.dim(1);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  d.Ho = input.dim(2);
  d.Wo = input.dim(3);
  d.s = stride;
  d.p = p;
  d.H = (d.Ho - 1) * stride - 2 * p + d.kh + output_padding;
  d.W = (d.Wo - 1) * stride - 2 * p + d.kw + output_padding;
  if (d.H < 1 || d.W < 1) {
    throw ShapeError("conv2d_transpose: computed output extent < 1 for input " +
                     shape_str(input.shape()));
  }
  Shape out_shape{d.N, d.Cin, d.H, d.W};
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)), 0.0);
  conv_input_grad_raw(input.values().data(), kernel.values().data(), d, out.data());
  Tensor res(out_shape, std::move(out));
  if (Tape* tp = recording_tape({&input, &kernel})) {
    int nx = tp->node_of(input), nk = tp->node_of(kernel);
    int id = tp->record(
        "conv2d_transpose", res.shape(), {nx, nk},
        [nx, nk, d, input, kernel](std::span<const double> g, Tape& t) {
          // d/dinput: the adjoint of the adjoint is the convolution itself
          if (nx >= 0) {
            std::vector<double> gi(static_cast<size_t>(d.N * d.Cout * d.Ho * d.Wo));
            conv_forward_raw(g.data(), kernel.values().data(), d, gi.data());
            t.accumulate(nx, gi);
          }
          // d/dkernel: correlate the output gradient with the op's input
          if (nk >= 0) {
            conv_kernel_grad_raw(g.data(), input.values().data(), d, t.grad_buffer(nk));
          }
        });
    tp->bind(res, id);
  }
  debug_check("conv2d_transpose", res);
  return res;
}

// adjoint of reflect_pad2d as a forward op (folds a padded tensor back)
Tensor reflect_fold2d(const Tensor& xp, int p) {
  const int64_t N = xp.dim(0), C = xp.dim(1), Hp = xp.dim(2), Wp = xp.dim(3);
  const int64_t H = Hp - 2 * p, W = Wp - 2 * p;
  if (H < 1 || W < 1) throw ShapeError("reflect_fold2d: padding exceeds extent");
  Shape out_shape{N, C, H, W};
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)), 0.0);
  reflect_pad_adjoint(xp.values().data(), N * C, H, W, p, out.data());
  Tensor res(out_shape, std::move(out));
  if (Tape* tp = recording_tape({&xp})) {
    int nx = tp->node_of(xp);
    int id = tp->record("reflect_fold2d", res.shape(), {nx},
                        [nx, N, C, H, W, p](std::span<const double> g, Tape& t) {
                          reflect_pad_forward(g.data(), N * C, H, W, p, t.grad_buffer(nx));
                        });
    tp->bind(res, id);
  }
  return res;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Pad2d pad) {
  check_defined("conv2d", input);
  check_defined("conv2d", kernel);
  if (pad.mode == PadMode::Reflect && pad.amount > 0) {
    return conv2d_zero(reflect_pad2d(input, pad.amount), kernel, stride, 0);
  }
  return conv2d_zero(input, kernel, stride, pad.amount);
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, int stride, Pad2d pad,
                        int output_padding) {
  check_defined("conv2d_transpose", input);
  check_defined("conv2d_transpose", kernel);
  if (pad.mode == PadMode::Reflect && pad.amount > 0) {
    // adjoint of conv(reflect_pad(x)): transpose to the padded grid, then fold
    Tensor padded = conv2d_transpose_zero(input, kernel, stride, 0, output_padding);
    return reflect_fold2d(padded, pad.amount);
  }
  return conv2d_transpose_zero(input, kernel, stride, pad.amount, output_padding);
}

// ---------------------------------------------------------------------------
// Instance normalization

Tensor instance_norm(const Tensor& x, const Tensor& scl, const Tensor& shf, double eps) {
  check_defined("instance_norm", x);
  check_defined("instance_norm", scl);
  check_defined("instance_norm", shf);
  if (x.shape().size() != 4) {
    throw ShapeError("instance_norm: need rank-4 input, got " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  if (scl.shape() != Shape{C} || shf.shape() != Shape{C}) {
    throw ShapeError("instance_norm: scale/shift must be [C]=[" + std::to_string(C) +
                     "], got " + shape_str(scl.shape()) + " and " + shape_str(shf.shape()));
  }
  if (P < 1) throw ShapeError("instance_norm: empty spatial extent");

  auto vx = x.values();
  auto vs = scl.values();
  auto vb = shf.values();
  std::vector<double> out(vx.size());
  // saved for backward: normalized values and 1/std per (n,c)
  auto xhat = std::make_shared<std::vector<double>>(vx.size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(N * C));

  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const size_t base = static_cast<size_t>((n * C + c) * P);
      double mu = 0.0;
      for (int64_t i = 0; i < P; ++i) mu += vx[base + i];
      mu /= static_cast<double>(P);
      double var = 0.0;
      for (int64_t i = 0; i < P; ++i) {
        const double dlt = vx[base + i] - mu;
        var += dlt * dlt;
      }
      var /= static_cast<double>(P);
      const double r = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(n * C + c)] = r;
      const double g = vs[static_cast<size_t>(c)], b = vb[static_cast<size_t>(c)];
      for (int64_t i = 0; i < P; ++i) {
        const double xh = (vx[base + i] - mu) * r;
        (*xhat)[base + i] = xh;
        out[base + i] = g * xh + b;
      }
    }
  }

  Tensor res(x.shape(), std::move(out));
  if (Tape* tp = recording_tape({&x, &scl, &shf})) {
    int nx = tp->node_of(x), ns = tp->node_of(scl), nb = tp->node_of(shf);
    int id = tp->record(
        "instance_norm", res.shape(), {nx, ns, nb},
        [nx, ns, nb, N, C, P, xhat, inv_std, scl](std::span<const double> g, Tape& t) {
          auto vs2 = scl.values();
          double* dx = nx >= 0 ? t.grad_buffer(nx) : nullptr;
          double* dscl = ns >= 0 ? t.grad_buffer(ns) : nullptr;
          double* dshf = nb >= 0 ? t.grad_buffer(nb) : nullptr;
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t c = 0; c < C; ++c) {
              const size_t base = static_cast<size_t>((n * C + c) * P);
              double sum_g = 0.0, sum_gx = 0.0;
              for (int64_t i = 0; i < P; ++i) {
                sum_g += g[base + i];
                sum_gx += g[base + i] * (*xhat)[base + i];
              }
              if (dshf) dshf[c] += sum_g;
              if (dscl) dscl[c] += sum_gx;
              if (dx) {
                const double r = (*inv_std)[static_cast<size_t>(n * C + c)];
                const double gam = vs2[static_cast<size_t>(c)];
                const double mg = sum_g / static_cast<double>(P);
                const double mgx = sum_gx / static_cast<double>(P);
                for (int64_t i = 0; i < P; ++i) {
                  dx[base + i] +=
                      gam * r * (g[base + i] - mg - (*xhat)[base + i] * mgx);
                }
              }
            }
          }
        });
    tp->bind(res, id);
  }
  debug_check("instance_norm", res);
  return res;
}

}  // namespace gait
