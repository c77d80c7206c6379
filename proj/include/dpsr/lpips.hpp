#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "dpsr/archive.hpp"
#include "dpsr/metrics.hpp"

namespace dpsr {

// VGG16 convolutional trunk, torchvision layer indexing.
struct Vgg16FeaturesImpl : torch::nn::Module {
  Vgg16FeaturesImpl();
  torch::nn::Sequential features{nullptr};
};
TORCH_MODULE(Vgg16Features);

// LPIPS distance with a VGG16 trunk. The archive holds the trunk
// ("features.<index>.weight"/".bias") and the five 1x1 linear heads
// ("lin0.weight" .. "lin4.weight", shape (1,C,1,1)).
//
// Inputs in [0,1] are mapped to [-1,1] and shifted/scaled per channel, the
// activations after relu1_2, relu2_2, relu3_3, relu4_3 and relu5_3 are unit
// normalized along channels, and the squared differences are weighted by the
// heads, averaged spatially and summed over layers.
class LpipsVgg : public PerceptualMetric {
 public:
  static std::shared_ptr<LpipsVgg> load(const std::filesystem::path& weights);
  static std::shared_ptr<LpipsVgg> from_archive(const Archive& archive);

  std::string name() const override { return "lpips-vgg"; }
  double distance(const Image& a, const Image& b) const override;
  // (N,3,H,W) pairs in [0,1] -> (N) distances.
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) const;

 private:
  LpipsVgg();
  std::vector<torch::Tensor> activations(const torch::Tensor& x) const;

  Vgg16Features trunk_{nullptr};
  std::vector<torch::Tensor> heads_;
  torch::Tensor shift_;
  torch::Tensor scale_;
};

// Seeded stand-in for the LPIPS weights (random trunk, positive heads).
Archive random_lpips_archive(uint64_t seed);

}  // namespace dpsr
