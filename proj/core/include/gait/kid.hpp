#pragma once

#include <vector>

#include "gait/tensor.hpp"

namespace gait {

/// Pluggable image feature extractor. `FlattenPixels` is the raw pixel
/// vector; `RandomConv` is a fixed, seeded, randomly-initialized small
/// convnet (global-average-pooled, randomly projected to out_dim).
struct FeatureExtractorSpec {
  enum class Kind { FlattenPixels, RandomConv };
  Kind kind = Kind::RandomConv;
  uint64_t seed = 0;
  int out_dim = 64;  // RandomConv only; FlattenPixels emits the pixel count
};

using FeatureMatrix = std::vector<std::vector<double>>;

/// Row i is the feature vector of image i. Deterministic for a fixed spec;
/// all images must share one shape.
FeatureMatrix extract_features(const FeatureExtractorSpec& spec,
                               const std::vector<Tensor>& images);

/// (a.b / d + 1)^3
double poly_kernel(std::span<const double> a, std::span<const double> b);

/// Unbiased squared maximum mean discrepancy between the rows of X and Y
/// under poly_kernel; may be negative on finite samples. m, n >= 2.
double mmd2_unbiased(const FeatureMatrix& X, const FeatureMatrix& Y);

/// Blockwise mean +- std of mmd2_unbiased over seeded subset pairs.
/// The mean is NOT pre-multiplied by 100 (that is presentation only).
struct KidEstimate {
  double mean = 0.0;
  double std = 0.0;  // population std over blocks; 0 when n_blocks == 1
  int n_blocks = 0;
  int block_size = 0;
};

/// Per block, block_size rows are sampled without replacement from each set
/// (independent seeded shuffles per block and per side). Rows are
/// canonicalized by sorting before sampling, so the estimate depends only on
/// row content and the seed, never on input row order.
KidEstimate kid_score(const FeatureMatrix& features_real,
                      const FeatureMatrix& features_fake, int block_size, int n_blocks,
                      uint64_t seed);

}  // namespace gait
