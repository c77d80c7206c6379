#include "support.hpp"

#include <mutex>

namespace dpsr::testing {

std::shared_ptr<const PretrainedBackbone> vgg19() {
  static const auto backbone =
      PretrainedBackbone::from_archive(BackboneKind::vgg19, random_backbone_archive(BackboneKind::vgg19, 11));
  return backbone;
}

std::shared_ptr<const PretrainedBackbone> resnet50() {
  static const auto backbone =
      PretrainedBackbone::from_archive(BackboneKind::resnet50, random_backbone_archive(BackboneKind::resnet50, 12));
  return backbone;
}

Backbones backbones() { return {vgg19(), resnet50()}; }

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dpsr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Image random_image(int64_t channels, int64_t height, int64_t width, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(channels, height, width);
  for (auto& v : img.data) v = u(rng);
  return img;
}

TrainConfig short_toy_config(int64_t iterations, uint64_t seed) {
  auto config = TrainConfig::toy();
  config.total_iterations = iterations;
  config.seed = seed;
  return config;
}

}  // namespace dpsr::testing
