#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dpsr {

// Trunk unit of the generator.
//   rrdb:     residual-in-residual dense blocks (ESRGAN)
//   residual: conv-LeakyReLU-conv residual blocks without normalization,
//             used by the SRGAN-style preset
enum class TrunkKind { rrdb, residual };

struct GeneratorConfig {
  int64_t num_blocks = 23;
  int64_t feature_width = 64;
  int64_t growth_channels = 32;
  double residual_scaling = 0.2;
  int64_t scale_factor = 4;
  TrunkKind trunk = TrunkKind::rrdb;

  static GeneratorConfig full();        // 23 RRDB, width 64, growth 32, x4
  static GeneratorConfig toy();         // 4 RRDB, width 32, growth 16, x4
  static GeneratorConfig srgan_toy();   // 4 residual blocks, width 32, x4

  // Upsample factors applied in order: x4 -> {2,2}, x3 -> {3}, x2 -> {2}.
  std::vector<int64_t> upsample_factors() const;
  void validate() const;
};

struct DiscriminatorConfig {
  int64_t input_size = 128;
  int64_t base_width = 64;

  static DiscriminatorConfig full() { return {128, 64}; }
  void validate() const;
};

// Five-convolution dense block; output = x + scaling * conv5(...).
struct ResidualDenseBlockImpl : torch::nn::Module {
  ResidualDenseBlockImpl(int64_t width, int64_t growth, double scaling);
  torch::Tensor forward(const torch::Tensor& x);

  std::vector<torch::nn::Conv2d> convs;
  double scaling;
};
TORCH_MODULE(ResidualDenseBlock);

// Three dense blocks wrapped in a scaled residual connection.
struct RRDBImpl : torch::nn::Module {
  RRDBImpl(int64_t width, int64_t growth, double scaling);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential blocks{nullptr};
  double scaling;
};
TORCH_MODULE(RRDB);

struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int64_t width);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Nearest-neighbour resize, 3x3 convolution, LeakyReLU(0.2).
struct UpsampleBlockImpl : torch::nn::Module {
  UpsampleBlockImpl(int64_t in_channels, int64_t out_channels, int64_t factor);
  torch::Tensor resize(const torch::Tensor& x) const;
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  int64_t factor;
};
TORCH_MODULE(UpsampleBlock);

struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& lr);

  GeneratorConfig config;
  torch::nn::Conv2d conv_first{nullptr};
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Conv2d trunk_conv{nullptr};
  torch::nn::Sequential upsampling{nullptr};
  torch::nn::Conv2d hr_conv{nullptr};
  torch::nn::Conv2d conv_last{nullptr};
};
TORCH_MODULE(Generator);

// VGG-style strided conv stack with batch normalization, ending in two
// fully connected layers and one raw (pre-sigmoid) score per image.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);
  torch::Tensor forward(const torch::Tensor& images);

  DiscriminatorConfig config;
  torch::nn::Sequential features{nullptr};
  torch::nn::Linear linear1{nullptr}, linear2{nullptr};
};
TORCH_MODULE(Discriminator);

// Builds with a seeded initialization: identical seeds give bit-identical
// parameters.
Generator build_generator(const GeneratorConfig& config, uint64_t seed);
Discriminator build_discriminator(const DiscriminatorConfig& config, uint64_t seed);

// lr: (N,3,h,w). Throws DivergenceError if the output contains NaN/Inf.
torch::Tensor forward_generator(Generator& generator, const torch::Tensor& lr);
// images: (N,3,S,S) with S = config.input_size, else ShapeError. Returns (N).
torch::Tensor forward_discriminator(Discriminator& discriminator, const torch::Tensor& images);

int64_t parameter_count(const torch::nn::Module& module);
// Type names of every submodule containing "Norm" (BatchNorm, InstanceNorm, ...).
std::vector<std::string> normalization_layers(const torch::nn::Module& module);

}  // namespace dpsr
