#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gait/ops.hpp"
#include "gait/rng.hpp"

namespace gait {

/// Residual generator at configurable desk scale. The full-size layout
/// (7x7 head/tail, stride-2 down/up pairs, residual bottleneck, tanh output)
/// is kept; width and depth shrink.
struct GeneratorConfig {
  int in_channels = 1;
  int base_channels = 16;
  int n_res_blocks = 2;
  int n_downsample = 2;
  int image_size = 32;

  bool operator==(const GeneratorConfig&) const = default;
};

/// Patch discriminator: n_layers stride-2 convs, then one stride-1 scoring
/// conv emitting an unbounded patch score map (least-squares GAN regresses
/// raw scores, so there is no output nonlinearity).
struct DiscriminatorConfig {
  int in_channels = 1;
  int base_channels = 16;
  int n_layers = 2;
  int image_size = 32;

  bool operator==(const DiscriminatorConfig&) const = default;
};

void validate(const GeneratorConfig& cfg);
void validate(const DiscriminatorConfig& cfg);

/// Spatial extent of the discriminator's score map for its configured input.
int discriminator_output_extent(const DiscriminatorConfig& cfg);

/// Insertion-ordered name -> Tensor collection for network parameters.
class ParamMap {
 public:
  Tensor& add(std::string name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return items_; }
  size_t size() const { return items_.size(); }
  int64_t total_parameters() const;

  void set_requires_grad(bool on);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct ParamSpec {
  enum class Kind { ConvWeight, NormScale, NormShift, Bias };
  std::string name;
  Shape shape;
  Kind kind;
};

std::vector<ParamSpec> generator_param_specs(const GeneratorConfig& cfg);
std::vector<ParamSpec> discriminator_param_specs(const DiscriminatorConfig& cfg);

/// Deterministic for a fixed seed: conv weights ~ Normal(0, 0.02),
/// norm scales 1, shifts 0, biases 0.
ParamMap init_generator(const GeneratorConfig& cfg, uint64_t seed);
ParamMap init_discriminator(const DiscriminatorConfig& cfg, uint64_t seed);

/// x [N,C,image_size,image_size] in [-1,1] -> same shape, tanh-bounded.
Tensor generator_forward(const GeneratorConfig& cfg, const ParamMap& params,
                         const Tensor& x);

/// x [N,C,image_size,image_size] -> patch score map [N,1,h,w].
Tensor discriminator_forward(const DiscriminatorConfig& cfg, const ParamMap& params,
                             const Tensor& x);

}  // namespace gait
