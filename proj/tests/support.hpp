#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "dpsr/feature_extraction.hpp"
#include "dpsr/image.hpp"
#include "dpsr/training.hpp"

namespace dpsr::testing {

// Stand-in backbones shared by all tests in a process (built once).
std::shared_ptr<const PretrainedBackbone> vgg19();
std::shared_ptr<const PretrainedBackbone> resnet50();
Backbones backbones();

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

Image random_image(int64_t channels, int64_t height, int64_t width, std::mt19937_64& rng);

// Toy config with a short run and in-memory backbones.
TrainConfig short_toy_config(int64_t iterations, uint64_t seed = 7);

}  // namespace dpsr::testing
