#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dpsr/archive.hpp"

namespace dpsr {

enum class BackboneKind { vgg19, resnet50 };
enum class ActivationPoint { before_activation, after_activation };

std::string to_string(BackboneKind kind);

// Convolutions per max-pool block of VGG19 and bottlenecks per ResNet50 stage.
inline constexpr std::array<int, 5> kVggConvsPerBlock = {2, 2, 4, 4, 4};
inline constexpr std::array<int64_t, 5> kVggBlockWidths = {64, 128, 256, 512, 512};
inline constexpr std::array<int, 4> kResnetBottlenecksPerStage = {3, 4, 6, 3};
inline constexpr std::array<int64_t, 4> kResnetStageWidths = {256, 512, 1024, 2048};

// Identifies an intermediate activation of a backbone.
//
// VGG19: (block, conv) names the j-th convolution preceding the i-th
// max-pool, conventionally read before its ReLU. ResNet50: (stage,
// bottleneck) names the n-th bottleneck of stage m, read after the block's
// closing ReLU (i.e. after the residual addition).
struct FeatureTap {
  BackboneKind backbone = BackboneKind::vgg19;
  int index_a = 5;
  int index_b = 4;
  ActivationPoint point = ActivationPoint::before_activation;

  static FeatureTap vgg(int block, int conv, ActivationPoint point = ActivationPoint::before_activation);
  static FeatureTap resnet(int stage, int bottleneck, ActivationPoint point = ActivationPoint::after_activation);

  // Accepts "phi_5_4" / "beta_3_6", optionally suffixed with ":pre" or
  // ":post" to override the default activation point.
  static FeatureTap parse(std::string_view text);
  std::string name() const;

  // Throws ValidationError listing the valid ranges.
  void validate() const;

  bool operator==(const FeatureTap&) const = default;
};

struct FeatureShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  bool operator==(const FeatureShape&) const = default;
};

// Smallest square input for which the tap keeps at least one spatial cell
// per downsampling stage.
int64_t minimum_input_size(const FeatureTap& tap);

// Shape of the tap's activation for a (height, width) input.
FeatureShape trace_feature_shape(const FeatureTap& tap, int64_t height, int64_t width);

struct FeatureMap {
  torch::Tensor data;  // (batch, C, H, W)
  FeatureTap tap;

  FeatureShape shape() const { return {data.size(1), data.size(2), data.size(3)}; }
};

// VGG19 convolutional trunk; parameter names follow torchvision
// ("features.<index>.weight").
struct Vgg19FeaturesImpl : torch::nn::Module {
  Vgg19FeaturesImpl();
  torch::Tensor forward_to(torch::Tensor x, const FeatureTap& tap);

  torch::nn::Sequential features{nullptr};
};
TORCH_MODULE(Vgg19Features);

struct BottleneckImpl : torch::nn::Module {
  BottleneckImpl(int64_t in_channels, int64_t width, int64_t stride);
  // Residual sum before the closing ReLU.
  torch::Tensor forward_pre_activation(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(forward_pre_activation(x)); }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

// ResNet50 without the classifier head; names follow torchvision
// ("layer3.5.conv2.weight", "layer2.0.downsample.1.running_var", ...).
struct ResNet50TrunkImpl : torch::nn::Module {
  ResNet50TrunkImpl();
  torch::Tensor forward_to(torch::Tensor x, const FeatureTap& tap);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  std::array<torch::nn::Sequential, 4> stages{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(ResNet50Trunk);

// Frozen ImageNet backbone. Inputs are RGB in [0,1] and are normalized with
// the ImageNet per-channel mean/std inside the forward pass.
class PretrainedBackbone {
 public:
  static std::shared_ptr<PretrainedBackbone> load(BackboneKind kind, const std::filesystem::path& weights);
  static std::shared_ptr<PretrainedBackbone> from_archive(BackboneKind kind, const Archive& archive);

  BackboneKind kind() const { return kind_; }
  // Per-block conv counts (VGG19) or per-stage bottleneck counts (ResNet50).
  std::vector<int> block_structure() const;
  int64_t conv_layer_count() const;
  std::vector<std::string> parameter_names() const;
  // Named parameters and buffers, for frozenness checks.
  std::vector<std::pair<std::string, torch::Tensor>> state() const;

  torch::Tensor forward_to(const torch::Tensor& images, const FeatureTap& tap) const;

 private:
  explicit PretrainedBackbone(BackboneKind kind);
  torch::nn::Module& module() const;

  BackboneKind kind_;
  Vgg19Features vgg_{nullptr};
  ResNet50Trunk resnet_{nullptr};
  torch::Tensor mean_;
  torch::Tensor std_;
};

struct ExtractOptions {
  // Reject inputs outside [0,1] (tolerance 1e-6). Generator outputs are not
  // range-constrained, so the training path turns this off.
  bool validate_range = true;
};

// A backbone truncated at one tap. Immutable; safe for concurrent use.
class FeatureExtractor {
 public:
  FeatureExtractor(std::shared_ptr<const PretrainedBackbone> backbone, FeatureTap tap);

  FeatureMap extract(const torch::Tensor& images, const ExtractOptions& options = {}) const;
  const FeatureTap& tap() const { return tap_; }
  const PretrainedBackbone& backbone() const { return *backbone_; }

 private:
  std::shared_ptr<const PretrainedBackbone> backbone_;
  FeatureTap tap_;
};

FeatureExtractor truncate(std::shared_ptr<const PretrainedBackbone> backbone, const FeatureTap& tap);

// Seeded He-initialized weights with the same names and shapes as the
// pretrained archives. Only for offline tests and desk-scale runs; they
// carry no ImageNet knowledge.
Archive random_backbone_archive(BackboneKind kind, uint64_t seed);

}  // namespace dpsr
