#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dpsr/image.hpp"

namespace dpsr {

// Seeded procedural RGB images (gradients, oriented gratings, flat shapes
// with hard edges) for desk-scale training and evaluation. Named
// "toy_<index>" with zero-padded indices.
std::vector<std::pair<std::string, Image>> make_toy_images(int count = 16, int64_t size = 64, uint64_t seed = 0);

// Writes make_toy_images(...) as <dir>/<name>.png and returns the paths.
std::vector<std::filesystem::path> write_toy_dataset(const std::filesystem::path& dir, int count = 16,
                                                     int64_t size = 64, uint64_t seed = 0);

// Writes seeded stand-in weights: vgg19.dpsr, resnet50.dpsr and
// lpips_vgg.dpsr. They have the pretrained archives' names and shapes but
// no ImageNet knowledge.
std::vector<std::filesystem::path> write_surrogate_weights(const std::filesystem::path& dir, uint64_t seed = 0);

}  // namespace dpsr
