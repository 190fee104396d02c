#include "gait/kid.hpp"

#include <algorithm>
#include <cmath>

#include "gait/ops.hpp"
#include "gait/rng.hpp"

namespace gait {

namespace {

FeatureMatrix flatten_pixels(const std::vector<Tensor>& images) {
  FeatureMatrix out;
  out.reserve(images.size());
  for (const Tensor& img : images) {
    auto v = img.values();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

// Three stride-2 convs with fixed random weights, leaky-relu, global average
// pool per channel, then a random projection to out_dim.
FeatureMatrix random_conv_features(const FeatureExtractorSpec& spec,
                                   const std::vector<Tensor>& images) {
  const Tensor& first = images.front();
  if (first.shape().size() != 3 && first.shape().size() != 4) {
    throw ShapeError("extract_features: images must be [C,H,W] or [1,C,H,W], got " +
                     shape_str(first.shape()));
  }
  const bool batched = first.shape().size() == 4;
  const int64_t C = batched ? first.dim(1) : first.dim(0);

  Rng rng(mix_seed(spec.seed, 0x6b1d));
  const int64_t widths[4] = {C, 8, 16, 32};
  std::vector<Tensor> kernels;
  for (int layer = 0; layer < 3; ++layer) {
    Shape ks{widths[layer + 1], widths[layer], 3, 3};
    std::vector<double> w(static_cast<size_t>(shape_numel(ks)));
    const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[layer] * 9));
    for (double& x : w) x = rng.normal(0.0, stddev);
    kernels.emplace_back(std::move(ks), std::move(w));
  }
  std::vector<std::vector<double>> projection(static_cast<size_t>(spec.out_dim));
  const double proj_std = 1.0 / std::sqrt(32.0);
  for (auto& row : projection) {
    row.resize(32);
    for (double& x : row) x = rng.normal(0.0, proj_std);
  }

  FeatureMatrix out;
  out.reserve(images.size());
  for (const Tensor& img : images) {
    if (img.shape() != first.shape()) {
      throw ShapeError("extract_features: images must share one shape, got " +
                       shape_str(first.shape()) + " and " + shape_str(img.shape()));
    }
    Tensor t = batched ? img.detach()
                       : reshape(img.detach(), {1, C, img.dim(1), img.dim(2)});
    for (const Tensor& k : kernels) {
      t = leaky_relu(conv2d(t, k, 2, zero_pad(1)), 0.2);
    }
    // global average pool
    const int64_t ch = t.dim(1), P = t.dim(2) * t.dim(3);
    auto v = t.values();
    std::vector<double> pooled(static_cast<size_t>(ch));
    for (int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (int64_t p = 0; p < P; ++p) acc += v[static_cast<size_t>(c * P + p)];
      pooled[static_cast<size_t>(c)] = acc / static_cast<double>(P);
    }
    std::vector<double> feat(static_cast<size_t>(spec.out_dim));
    for (int i = 0; i < spec.out_dim; ++i) {
      double acc = 0.0;
      for (int64_t c = 0; c < 32; ++c) {
        acc += projection[static_cast<size_t>(i)][static_cast<size_t>(c)] *
               pooled[static_cast<size_t>(c)];
      }
      feat[static_cast<size_t>(i)] = acc;
    }
    out.push_back(std::move(feat));
  }
  return out;
}

}  // namespace

FeatureMatrix extract_features(const FeatureExtractorSpec& spec,
                               const std::vector<Tensor>& images) {
  if (images.empty()) throw ConfigError("extract_features: empty image set");
  if (spec.kind == FeatureExtractorSpec::Kind::FlattenPixels) {
    for (const Tensor& img : images) {
      if (img.shape() != images.front().shape()) {
        throw ShapeError("extract_features: images must share one shape");
      }
    }
    return flatten_pixels(images);
  }
  if (spec.out_dim < 1) throw ConfigError("extract_features: out_dim must be positive");
  // the conv stack halves three times; below 8 px the pooled map degenerates
  const Tensor& f = images.front();
  const int64_t H = f.shape().size() == 4 ? f.dim(2) : f.dim(1);
  if (H < 8) throw ConfigError("extract_features: random_conv needs images >= 8 px");
  return random_conv_features(spec, images);
}

double poly_kernel(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("poly_kernel: dimension mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw ShapeError("poly_kernel: empty vectors");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double base = dot / static_cast<double>(a.size()) + 1.0;
  return base * base * base;
}

double mmd2_unbiased(const FeatureMatrix& X, const FeatureMatrix& Y) {
  const size_t m = X.size(), n = Y.size();
  if (m < 2 || n < 2) {
    throw ConfigError("mmd2_unbiased: need at least 2 rows per set, got " +
                      std::to_string(m) + " and " + std::to_string(n));
  }
  double kxx = 0.0;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j)
      if (i != j) kxx += poly_kernel(X[i], X[j]);
  double kyy = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (i != j) kyy += poly_kernel(Y[i], Y[j]);
  double kxy = 0.0;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) kxy += poly_kernel(X[i], Y[j]);
  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  return kxx / (dm * (dm - 1.0)) + kyy / (dn * (dn - 1.0)) - 2.0 * kxy / (dm * dn);
}

namespace {

// first `count` entries of a seeded shuffle of 0..n-1
std::vector<size_t> sample_without_replacement(size_t n, size_t count, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(count);
  return idx;
}

}  // namespace

KidEstimate kid_score(const FeatureMatrix& features_real,
                      const FeatureMatrix& features_fake, int block_size, int n_blocks,
                      uint64_t seed) {
  if (n_blocks < 1) throw ConfigError("kid_score: n_blocks must be >= 1");
  if (block_size < 2) throw ConfigError("kid_score: block_size must be >= 2");
  if (features_real.size() < static_cast<size_t>(block_size) ||
      features_fake.size() < static_cast<size_t>(block_size)) {
    throw ConfigError("kid_score: block_size " + std::to_string(block_size) +
                      " exceeds set size (" + std::to_string(features_real.size()) +
                      ", " + std::to_string(features_fake.size()) + ")");
  }

  // canonical row order: sampling must not depend on input row order
  FeatureMatrix real_sorted = features_real;
  FeatureMatrix fake_sorted = features_fake;
  std::sort(real_sorted.begin(), real_sorted.end());
  std::sort(fake_sorted.begin(), fake_sorted.end());

  std::vector<double> per_block(static_cast<size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    Rng rng_real(mix_seed(seed, 0x7e41, static_cast<uint64_t>(b)));
    Rng rng_fake(mix_seed(seed, 0xfa4e, static_cast<uint64_t>(b)));
    auto idx_r = sample_without_replacement(real_sorted.size(),
                                            static_cast<size_t>(block_size), rng_real);
    auto idx_f = sample_without_replacement(fake_sorted.size(),
                                            static_cast<size_t>(block_size), rng_fake);
    FeatureMatrix xr, xf;
    xr.reserve(idx_r.size());
    xf.reserve(idx_f.size());
    for (size_t i : idx_r) xr.push_back(real_sorted[i]);
    for (size_t i : idx_f) xf.push_back(fake_sorted[i]);
    per_block[static_cast<size_t>(b)] = mmd2_unbiased(xr, xf);
  }

  KidEstimate est;
  est.n_blocks = n_blocks;
  est.block_size = block_size;
  double acc = 0.0;
  for (double v : per_block) acc += v;
  est.mean = acc / static_cast<double>(n_blocks);
  double var = 0.0;
  for (double v : per_block) var += (v - est.mean) * (v - est.mean);
  est.std = std::sqrt(var / static_cast<double>(n_blocks));
  return est;
}

}  // namespace gait
