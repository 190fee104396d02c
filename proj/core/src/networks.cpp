#include "gait/networks.hpp"

namespace gait {

namespace {

bool power_of_two_divides(int value, int exponent) {
  for (int i = 0; i < exponent; ++i) {
    if (value % 2 != 0) return false;
    value /= 2;
  }
  return true;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  if (cfg.in_channels < 1 || cfg.base_channels < 1 || cfg.n_res_blocks < 0 ||
      cfg.n_downsample < 0 || cfg.image_size < 1) {
    throw ConfigError("generator config: all extents must be positive");
  }
  if (!power_of_two_divides(cfg.image_size, cfg.n_downsample)) {
    throw ConfigError("generator config: image_size " + std::to_string(cfg.image_size) +
                      " not divisible by 2^" + std::to_string(cfg.n_downsample));
  }
  if (cfg.image_size < 4) {
    throw ConfigError("generator config: image_size must be >= 4 (7x7 head needs it)");
  }
  if ((cfg.image_size >> cfg.n_downsample) < 2) {
    throw ConfigError("generator config: bottleneck extent below 2");
  }
}

void validate(const DiscriminatorConfig& cfg) {
  if (cfg.in_channels < 1 || cfg.base_channels < 1 || cfg.n_layers < 1 ||
      cfg.image_size < 1) {
    throw ConfigError("discriminator config: all extents must be positive");
  }
  if (discriminator_output_extent(cfg) < 1) {
    throw ConfigError("discriminator config: score map would be empty for image_size " +
                      std::to_string(cfg.image_size));
  }
}

int discriminator_output_extent(const DiscriminatorConfig& cfg) {
  int h = cfg.image_size;
  for (int i = 0; i < cfg.n_layers; ++i) {
    h = (h + 2 - 4) / 2 + 1;  // k=4, s=2, p=1
    if (h < 1) return 0;
  }
  return h + 2 - 4 + 1;  // scoring conv, k=4, s=1, p=1
}

// ---------------------------------------------------------------------------
// ParamMap

Tensor& ParamMap::add(std::string name, Tensor t) {
  if (index_.contains(name)) throw Error("duplicate parameter name: " + name);
  index_.emplace(name, items_.size());
  items_.emplace_back(std::move(name), std::move(t));
  return items_.back().second;
}

Tensor& ParamMap::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return items_[it->second].second;
}

const Tensor& ParamMap::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return items_[it->second].second;
}

bool ParamMap::contains(const std::string& name) const { return index_.contains(name); }

int64_t ParamMap::total_parameters() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamMap::set_requires_grad(bool on) {
  for (auto& [name, t] : items_) t.set_requires_grad(on);
}

// ---------------------------------------------------------------------------
// Parameter layouts

std::vector<ParamSpec> generator_param_specs(const GeneratorConfig& cfg) {
  validate(cfg);
  using K = ParamSpec::Kind;
  std::vector<ParamSpec> specs;
  const int64_t base = cfg.base_channels, in = cfg.in_channels;

  specs.push_back({"head.conv.w", {base, in, 7, 7}, K::ConvWeight});
  specs.push_back({"head.norm.scale", {base}, K::NormScale});
  specs.push_back({"head.norm.shift", {base}, K::NormShift});

  int64_t ch = base;
  for (int i = 0; i < cfg.n_downsample; ++i) {
    const std::string p = "down" + std::to_string(i);
    specs.push_back({p + ".conv.w", {ch * 2, ch, 3, 3}, K::ConvWeight});
    specs.push_back({p + ".norm.scale", {ch * 2}, K::NormScale});
    specs.push_back({p + ".norm.shift", {ch * 2}, K::NormShift});
    ch *= 2;
  }
  for (int i = 0; i < cfg.n_res_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    specs.push_back({p + ".conv1.w", {ch, ch, 3, 3}, K::ConvWeight});
    specs.push_back({p + ".norm1.scale", {ch}, K::NormScale});
    specs.push_back({p + ".norm1.shift", {ch}, K::NormShift});
    specs.push_back({p + ".conv2.w", {ch, ch, 3, 3}, K::ConvWeight});
    specs.push_back({p + ".norm2.scale", {ch}, K::NormScale});
    specs.push_back({p + ".norm2.shift", {ch}, K::NormShift});
  }
  for (int i = 0; i < cfg.n_downsample; ++i) {
    const std::string p = "up" + std::to_string(i);
    // transposed conv kernel: [layer_in, layer_out, kh, kw]
    specs.push_back({p + ".conv.w", {ch, ch / 2, 3, 3}, K::ConvWeight});
    specs.push_back({p + ".norm.scale", {ch / 2}, K::NormScale});
    specs.push_back({p + ".norm.shift", {ch / 2}, K::NormShift});
    ch /= 2;
  }
  specs.push_back({"tail.conv.w", {in, base, 7, 7}, K::ConvWeight});
  specs.push_back({"tail.conv.b", {in}, K::Bias});
  return specs;
}

std::vector<ParamSpec> discriminator_param_specs(const DiscriminatorConfig& cfg) {
  validate(cfg);
  using K = ParamSpec::Kind;
  std::vector<ParamSpec> specs;
  const int64_t in = cfg.in_channels;
  int64_t ch = cfg.base_channels;

  specs.push_back({"layer0.conv.w", {ch, in, 4, 4}, K::ConvWeight});
  specs.push_back({"layer0.conv.b", {ch}, K::Bias});
  for (int i = 1; i < cfg.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i);
    specs.push_back({p + ".conv.w", {ch * 2, ch, 4, 4}, K::ConvWeight});
    specs.push_back({p + ".norm.scale", {ch * 2}, K::NormScale});
    specs.push_back({p + ".norm.shift", {ch * 2}, K::NormShift});
    ch *= 2;
  }
  specs.push_back({"score.conv.w", {1, ch, 4, 4}, K::ConvWeight});
  specs.push_back({"score.conv.b", {1}, K::Bias});
  return specs;
}

namespace {

ParamMap init_from_specs(const std::vector<ParamSpec>& specs, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9a17));
  ParamMap params;
  for (const auto& spec : specs) {
    Tensor t(spec.shape);
    auto v = t.mutable_values();
    switch (spec.kind) {
      case ParamSpec::Kind::ConvWeight:
        for (double& x : v) x = rng.normal(0.0, 0.02);
        break;
      case ParamSpec::Kind::NormScale:
        for (double& x : v) x = 1.0;
        break;
      case ParamSpec::Kind::NormShift:
      case ParamSpec::Kind::Bias:
        break;  // zero-initialized
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

void check_input(const char* who, const Tensor& x, int channels, int image_size) {
  if (x.shape().size() != 4 || x.dim(1) != channels || x.dim(2) != image_size ||
      x.dim(3) != image_size) {
    throw ShapeError(std::string(who) + ": expected [N," + std::to_string(channels) + "," +
                     std::to_string(image_size) + "," + std::to_string(image_size) +
                     "], got " + shape_str(x.shape()));
  }
}

}  // namespace

ParamMap init_generator(const GeneratorConfig& cfg, uint64_t seed) {
  return init_from_specs(generator_param_specs(cfg), seed);
}

ParamMap init_discriminator(const DiscriminatorConfig& cfg, uint64_t seed) {
  return init_from_specs(discriminator_param_specs(cfg), seed);
}

Tensor generator_forward(const GeneratorConfig& cfg, const ParamMap& params,
                         const Tensor& x) {
  validate(cfg);
  check_input("generator_forward", x, cfg.in_channels, cfg.image_size);

  Tensor t = conv2d(x, params.at("head.conv.w"), 1, reflect_pad(3));
  t = relu(instance_norm(t, params.at("head.norm.scale"), params.at("head.norm.shift")));

  for (int i = 0; i < cfg.n_downsample; ++i) {
    const std::string p = "down" + std::to_string(i);
    t = conv2d(t, params.at(p + ".conv.w"), 2, reflect_pad(1));
    t = relu(instance_norm(t, params.at(p + ".norm.scale"), params.at(p + ".norm.shift")));
  }
  for (int i = 0; i < cfg.n_res_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    Tensor r = conv2d(t, params.at(p + ".conv1.w"), 1, reflect_pad(1));
    r = relu(instance_norm(r, params.at(p + ".norm1.scale"), params.at(p + ".norm1.shift")));
    r = conv2d(r, params.at(p + ".conv2.w"), 1, reflect_pad(1));
    r = instance_norm(r, params.at(p + ".norm2.scale"), params.at(p + ".norm2.shift"));
    t = add(t, r);
  }
  for (int i = 0; i < cfg.n_downsample; ++i) {
    const std::string p = "up" + std::to_string(i);
    t = conv2d_transpose(t, params.at(p + ".conv.w"), 2, zero_pad(1), 1);
    t = relu(instance_norm(t, params.at(p + ".norm.scale"), params.at(p + ".norm.shift")));
  }
  t = conv2d(t, params.at("tail.conv.w"), 1, reflect_pad(3));
  t = add_channel_bias(t, params.at("tail.conv.b"));
  return tanh_op(t);
}

Tensor discriminator_forward(const DiscriminatorConfig& cfg, const ParamMap& params,
                             const Tensor& x) {
  validate(cfg);
  check_input("discriminator_forward", x, cfg.in_channels, cfg.image_size);

  Tensor t = conv2d(x, params.at("layer0.conv.w"), 2, zero_pad(1));
  t = leaky_relu(add_channel_bias(t, params.at("layer0.conv.b")), 0.2);
  for (int i = 1; i < cfg.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i);
    t = conv2d(t, params.at(p + ".conv.w"), 2, zero_pad(1));
    t = leaky_relu(
        instance_norm(t, params.at(p + ".norm.scale"), params.at(p + ".norm.shift")), 0.2);
  }
  t = conv2d(t, params.at("score.conv.w"), 1, zero_pad(1));
  return add_channel_bias(t, params.at("score.conv.b"));
}

}  // namespace gait
