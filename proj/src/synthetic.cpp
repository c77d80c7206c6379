#include "dpsr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "dpsr/data_pipeline.hpp"
#include "dpsr/feature_extraction.hpp"
#include "dpsr/lpips.hpp"

namespace dpsr {
namespace {

// Uniform in [lo, hi) from the top 53 bits; independent of the standard
// library's distribution implementations.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Image toy_image(int64_t size, std::mt19937_64& rng) {
  Image img(3, size, size);
  const double n = static_cast<double>(size);
  double base[3], grad_y[3], grad_x[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = uniform(rng, 0.2, 0.8);
    grad_y[c] = uniform(rng, -0.3, 0.3);
    grad_x[c] = uniform(rng, -0.3, 0.3);
  }
  struct Grating {
    double fy, fx, phase, amp[3];
  };
  std::vector<Grating> gratings(3);
  for (auto& g : gratings) {
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    const double freq = uniform(rng, 1.0, 6.0) * 2.0 * std::numbers::pi / n;
    g.fy = freq * std::sin(angle);
    g.fx = freq * std::cos(angle);
    g.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (auto& a : g.amp) a = uniform(rng, -0.15, 0.15);
  }
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + grad_y[c] * (static_cast<double>(y) / n - 0.5) + grad_x[c] * (static_cast<double>(x) / n - 0.5);
        for (const auto& g : gratings) v += g.amp[c] * std::sin(g.fy * static_cast<double>(y) + g.fx * static_cast<double>(x) + g.phase);
        img.at(c, y, x) = static_cast<float>(v);
      }

  const int shapes = 2 + static_cast<int>(rng() % 4);
  for (int s = 0; s < shapes; ++s) {
    const bool disc = rng() % 2 == 0;
    const double cy = uniform(rng, 0.0, n), cx = uniform(rng, 0.0, n);
    const double ry = uniform(rng, n / 16, n / 4), rx = disc ? ry : uniform(rng, n / 16, n / 4);
    double color[3];
    for (auto& col : color) col = uniform(rng, 0.0, 1.0);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(color[c]);
      }
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace

std::vector<std::pair<std::string, Image>> make_toy_images(int count, int64_t size, uint64_t seed) {
  std::vector<std::pair<std::string, Image>> images;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "toy_%03d", i);
    images.emplace_back(name, toy_image(size, rng));
  }
  return images;
}

std::vector<std::filesystem::path> write_toy_dataset(const std::filesystem::path& dir, int count, int64_t size,
                                                     uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& [name, image] : make_toy_images(count, size, seed)) {
    paths.push_back(dir / (name + ".png"));
    write_png(paths.back(), image);
  }
  return paths;
}

std::vector<std::filesystem::path> write_surrogate_weights(const std::filesystem::path& dir, uint64_t seed) {
  std::filesystem::create_directories(dir);
  const std::vector<std::filesystem::path> paths = {dir / "vgg19.dpsr", dir / "resnet50.dpsr", dir / "lpips_vgg.dpsr"};
  random_backbone_archive(BackboneKind::vgg19, mix_seed(seed, 0)).save(paths[0]);
  random_backbone_archive(BackboneKind::resnet50, mix_seed(seed, 1)).save(paths[1]);
  random_lpips_archive(mix_seed(seed, 2)).save(paths[2]);
  return paths;
}

}  // namespace dpsr
