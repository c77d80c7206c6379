#include "dpsr/networks.hpp"

#include "dpsr/errors.hpp"

namespace dpsr {
namespace nn = torch::nn;

namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)); }

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

void init_conv(nn::Conv2dImpl& conv, double scale) {
  torch::NoGradGuard no_grad;
  nn::init::kaiming_normal_(conv.weight, 0.0, torch::kFanIn, torch::kReLU);
  conv.weight.mul_(scale);
  if (conv.bias.defined()) conv.bias.zero_();
}

}  // namespace

GeneratorConfig GeneratorConfig::full() { return {23, 64, 32, 0.2, 4, TrunkKind::rrdb}; }
GeneratorConfig GeneratorConfig::toy() { return {4, 32, 16, 0.2, 4, TrunkKind::rrdb}; }
GeneratorConfig GeneratorConfig::srgan_toy() { return {4, 32, 16, 1.0, 4, TrunkKind::residual}; }

std::vector<int64_t> GeneratorConfig::upsample_factors() const {
  switch (scale_factor) {
    case 2: return {2};
    case 3: return {3};
    case 4: return {2, 2};
    default: throw ConfigError("scale_factor must be 2, 3 or 4, got " + std::to_string(scale_factor));
  }
}

void GeneratorConfig::validate() const {
  upsample_factors();
  if (num_blocks < 1 || feature_width < 1 || growth_channels < 1)
    throw ConfigError("generator block count and widths must be positive");
  if (!(residual_scaling > 0.0 && residual_scaling <= 1.0)) throw ConfigError("residual_scaling must lie in (0,1]");
}

void DiscriminatorConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0)
    throw ConfigError("discriminator input_size must be a positive multiple of 32");
  if (base_width < 1) throw ConfigError("discriminator base_width must be positive");
}

// ------------------------------------------------------------ blocks

ResidualDenseBlockImpl::ResidualDenseBlockImpl(int64_t width, int64_t growth, double scaling_) : scaling(scaling_) {
  for (int64_t k = 0; k < 5; ++k) {
    const int64_t out = k == 4 ? width : growth;
    convs.push_back(register_module("conv" + std::to_string(k + 1), conv3x3(width + k * growth, out)));
  }
}

torch::Tensor ResidualDenseBlockImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> dense{x};
  for (std::size_t k = 0; k < 4; ++k) dense.push_back(lrelu(convs[k]->forward(torch::cat(dense, 1))));
  return x + scaling * convs[4]->forward(torch::cat(dense, 1));
}

RRDBImpl::RRDBImpl(int64_t width, int64_t growth, double scaling_) : scaling(scaling_) {
  blocks = register_module("blocks", nn::Sequential(ResidualDenseBlock(width, growth, scaling),
                                                    ResidualDenseBlock(width, growth, scaling),
                                                    ResidualDenseBlock(width, growth, scaling)));
}

torch::Tensor RRDBImpl::forward(const torch::Tensor& x) { return x + scaling * blocks->forward(x); }

ResidualBlockImpl::ResidualBlockImpl(int64_t width) {
  conv1 = register_module("conv1", conv3x3(width, width));
  conv2 = register_module("conv2", conv3x3(width, width));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + conv2(lrelu(conv1(x))); }

UpsampleBlockImpl::UpsampleBlockImpl(int64_t in_channels, int64_t out_channels, int64_t factor_) : factor(factor_) {
  conv = register_module("conv", conv3x3(in_channels, out_channels));
}

torch::Tensor UpsampleBlockImpl::resize(const torch::Tensor& x) const {
  return torch::nn::functional::interpolate(
      x, torch::nn::functional::InterpolateFuncOptions()
             .scale_factor(std::vector<double>{static_cast<double>(factor), static_cast<double>(factor)})
             .mode(torch::kNearest));
}

torch::Tensor UpsampleBlockImpl::forward(const torch::Tensor& x) { return lrelu(conv(resize(x))); }

// --------------------------------------------------------- generator

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config_) : config(config_) {
  config.validate();
  const auto nf = config.feature_width;
  conv_first = register_module("conv_first", conv3x3(3, nf));
  trunk = nn::Sequential();
  for (int64_t b = 0; b < config.num_blocks; ++b) {
    if (config.trunk == TrunkKind::rrdb) trunk->push_back(RRDB(nf, config.growth_channels, config.residual_scaling));
    else trunk->push_back(ResidualBlock(nf));
  }
  register_module("trunk", trunk);
  trunk_conv = register_module("trunk_conv", conv3x3(nf, nf));
  upsampling = nn::Sequential();
  for (auto factor : config.upsample_factors()) upsampling->push_back(UpsampleBlock(nf, nf, factor));
  register_module("upsampling", upsampling);
  hr_conv = register_module("hr_conv", conv3x3(nf, nf));
  conv_last = register_module("conv_last", conv3x3(nf, 3));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& lr) {
  auto features = conv_first(lr);
  features = features + trunk_conv(trunk->forward(features));
  features = upsampling->forward(features);
  return conv_last(lrelu(hr_conv(features)));
}

// ----------------------------------------------------- discriminator

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config_) : config(config_) {
  config.validate();
  const auto nf = config.base_width;
  features = nn::Sequential();
  auto conv = [](int64_t in, int64_t out, int64_t k, int64_t stride, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(1).bias(bias));
  };
  features->push_back(conv(3, nf, 3, 1, true));
  features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  const std::vector<int64_t> widths = {nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf};
  int64_t in = nf;
  for (std::size_t level = 0; level < widths.size(); ++level) {
    const int64_t out = widths[level];
    if (level > 0) {
      features->push_back(conv(in, out, 3, 1, false));
      features->push_back(nn::BatchNorm2d(out));
      features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    }
    features->push_back(conv(out, out, 4, 2, false));
    features->push_back(nn::BatchNorm2d(out));
    features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = out;
  }
  register_module("features", features);
  const int64_t spatial = config.input_size / 32;
  linear1 = register_module("linear1", nn::Linear(8 * nf * spatial * spatial, 100));
  linear2 = register_module("linear2", nn::Linear(100, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  auto x = features->forward(images).flatten(1);
  return linear2(lrelu(linear1(x))).squeeze(1);
}

// ------------------------------------------------------------ builders

Generator build_generator(const GeneratorConfig& config, uint64_t seed) {
  torch::manual_seed(seed);
  Generator generator(config);
  for (const auto& item : generator->named_modules("", /*include_self=*/false)) {
    if (auto conv = std::dynamic_pointer_cast<nn::Conv2dImpl>(item.value())) {
      const bool in_trunk = item.key().rfind("trunk.", 0) == 0;
      init_conv(*conv, in_trunk ? 0.1 : 1.0);
    }
  }
  return generator;
}

Discriminator build_discriminator(const DiscriminatorConfig& config, uint64_t seed) {
  torch::manual_seed(seed);
  Discriminator discriminator(config);
  torch::NoGradGuard no_grad;
  for (const auto& m : discriminator->modules(/*include_self=*/false)) {
    if (auto conv = std::dynamic_pointer_cast<nn::Conv2dImpl>(m)) {
      nn::init::kaiming_normal_(conv->weight, 0.2, torch::kFanIn, torch::kLeakyReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto linear = std::dynamic_pointer_cast<nn::LinearImpl>(m)) {
      nn::init::kaiming_normal_(linear->weight, 0.2, torch::kFanIn, torch::kLeakyReLU);
      linear->bias.zero_();
    }
  }
  return discriminator;
}

torch::Tensor forward_generator(Generator& generator, const torch::Tensor& lr) {
  if (lr.dim() != 4 || lr.size(1) != 3) throw ShapeError("forward_generator: expected (N,3,h,w) input");
  auto out = generator->forward(lr);
  if (!torch::isfinite(out).all().item<bool>())
    throw DivergenceError("generator produced non-finite output");
  return out;
}

torch::Tensor forward_discriminator(Discriminator& discriminator, const torch::Tensor& images) {
  const auto size = discriminator->config.input_size;
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != size || images.size(3) != size)
    throw ShapeError("discriminator expects (N,3," + std::to_string(size) + "," + std::to_string(size) + ") input");
  return discriminator->forward(images);
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t count = 0;
  for (const auto& p : module.parameters()) count += p.numel();
  return count;
}

std::vector<std::string> normalization_layers(const torch::nn::Module& module) {
  std::vector<std::string> found;
  for (const auto& m : module.modules(/*include_self=*/true)) {
    const auto name = m->name();
    if (name.find("Norm") != std::string::npos) found.push_back(name);
  }
  return found;
}

}  // namespace dpsr
