#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dpsr/image.hpp"

namespace dpsr {

struct Tile {
  Image image;
  int64_t y = 0;
  int64_t x = 0;
};

// (floor((H - tile)/stride) + 1) * (floor((W - tile)/stride) + 1), or 0 if the
// image is smaller than the tile.
int64_t tile_count(int64_t height, int64_t width, int64_t tile, int64_t stride);

// Sliding-window sub-images fully inside `image`. Images smaller than the
// tile are skipped with a warning (empty result).
std::vector<Tile> tile_image(const Image& image, int64_t tile = 480, int64_t stride = 480);

// Cubic convolution kernel (Keys), a = -0.5.
double cubic_kernel(double x, double a = -0.5);

// Antialiased bicubic downsampling by an integer factor: the kernel is
// stretched by `scale`, taps are normalized to sum 1 and indices outside the
// image are mirrored. Output is clipped to [0,1]. Dimensions must be
// divisible by `scale`.
Image degrade_bicubic(const Image& hr, int64_t scale);

// Largest top-left crop whose dimensions are multiples of `scale`.
Image modcrop(const Image& image, int64_t scale);

struct ImagePairSample {
  Image hr;
  Image lr;
  std::string source_id;
  int64_t hr_y = 0;
  int64_t hr_x = 0;
};

// An HR sub-image together with its degraded counterpart.
struct SubImage {
  std::string id;
  Image hr;
  Image lr;
};

struct PatchOffset {
  int64_t hr_y = 0;
  int64_t hr_x = 0;
  int64_t lr_y = 0;
  int64_t lr_x = 0;
};

// Uniform scale-aligned offset: hr offsets are multiples of `scale` in
// [0, H - patch]. Throws ShapeError if the sub-image is smaller than patch.
PatchOffset random_patch_offset(int64_t height, int64_t width, int64_t patch, int64_t scale, std::mt19937_64& rng);

// Crops an HR patch and the matching region of the pre-degraded LR image.
ImagePairSample crop_patch_pair(const SubImage& sub, const PatchOffset& offset, int64_t patch, int64_t scale);
ImagePairSample random_patch_pair(const SubImage& sub, int64_t patch, int64_t scale, std::mt19937_64& rng);

// Collection of training sub-images. Sub-images are degraded once on first
// use (crop-after-degrade) and cached.
class TrainingSet {
 public:
  TrainingSet(std::vector<std::filesystem::path> files, int64_t scale, std::size_t max_cached = 256);
  TrainingSet(TrainingSet&& other) noexcept;
  TrainingSet& operator=(TrainingSet&&) = delete;

  static TrainingSet from_directory(const std::filesystem::path& dir, int64_t scale, std::size_t max_cached = 256);
  static TrainingSet from_images(std::vector<std::pair<std::string, Image>> images, int64_t scale);

  std::size_t size() const { return files_.empty() ? in_memory_.size() : files_.size(); }
  int64_t scale() const { return scale_; }
  std::shared_ptr<const SubImage> get(std::size_t index) const;

 private:
  TrainingSet() = default;

  std::vector<std::filesystem::path> files_;
  std::vector<std::shared_ptr<const SubImage>> in_memory_;
  int64_t scale_ = 4;
  std::size_t max_cached_ = 256;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const SubImage>> cache_;
};

struct Batch {
  torch::Tensor hr;  // (N,3,P,P)
  torch::Tensor lr;  // (N,3,P/s,P/s)
  std::vector<std::string> provenance;
};

// Stacks samples into channels-first batches.
Batch make_batch(std::span<const ImagePairSample> samples);

struct SamplerOptions {
  int64_t batch_size = 16;
  int64_t patch = 128;
  uint64_t seed = 0;
};

// Deterministic batch stream: batch k is a pure function of (dataset, seed,
// k). The dataset is visited in per-epoch shuffled order; a dataset smaller
// than the batch simply wraps into the next reshuffled epoch.
class BatchSampler {
 public:
  BatchSampler(const TrainingSet& dataset, SamplerOptions options);
  Batch batch_at(int64_t iteration) const;
  std::size_t dataset_index(int64_t position) const;

 private:
  const std::vector<std::size_t>& permutation(int64_t epoch) const;

  const TrainingSet& dataset_;
  SamplerOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<int64_t, std::vector<std::size_t>> permutations_;
};

// splitmix64 finalizer, used to derive independent stream seeds.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

// Tiles every manifest image into `out_dir` as <source>_<y>_<x>.png and
// returns the written paths.
std::vector<std::filesystem::path> prepare_tiles(const std::filesystem::path& manifest,
                                                 const std::filesystem::path& out_dir, int64_t tile = 480,
                                                 int64_t stride = 480);

}  // namespace dpsr
