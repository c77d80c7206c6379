#include "dpsr/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dpsr/errors.hpp"
#include "dpsr/log.hpp"

namespace dpsr {
namespace {

int64_t mirror(int64_t index, int64_t n) {
  while (index < 0 || index >= n) {
    if (index < 0) index = -index - 1;
    if (index >= n) index = 2 * n - index - 1;
  }
  return index;
}

struct Taps {
  std::vector<int64_t> index;
  std::vector<double> weight;
};

// Contributions for every output position along one axis.
std::vector<Taps> downsample_taps(int64_t in_size, int64_t scale) {
  const int64_t out_size = in_size / scale;
  const double s = static_cast<double>(scale);
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  for (int64_t i = 0; i < out_size; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * s - 0.5;
    const auto first = static_cast<int64_t>(std::floor(center - 2.0 * s));
    const auto last = static_cast<int64_t>(std::ceil(center + 2.0 * s));
    double total = 0.0;
    auto& t = taps[i];
    for (int64_t j = first; j <= last; ++j) {
      const double w = cubic_kernel((center - static_cast<double>(j)) / s);
      if (w == 0.0) continue;
      t.index.push_back(mirror(j, in_size));
      t.weight.push_back(w);
      total += w;
    }
    for (auto& w : t.weight) w /= total;
  }
  return taps;
}

}  // namespace

int64_t tile_count(int64_t height, int64_t width, int64_t tile, int64_t stride) {
  if (tile <= 0 || stride <= 0) throw ValidationError("tile and stride must be positive");
  if (height < tile || width < tile) return 0;
  return ((height - tile) / stride + 1) * ((width - tile) / stride + 1);
}

std::vector<Tile> tile_image(const Image& image, int64_t tile, int64_t stride) {
  std::vector<Tile> tiles;
  if (tile_count(image.height, image.width, tile, stride) == 0) {
    log::warn("skipping ", image.height, "x", image.width, " image: smaller than the ", tile, "x", tile, " tile");
    return tiles;
  }
  for (int64_t y = 0; y + tile <= image.height; y += stride)
    for (int64_t x = 0; x + tile <= image.width; x += stride) tiles.push_back({crop(image, y, x, tile, tile), y, x});
  return tiles;
}

double cubic_kernel(double x, double a) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

Image degrade_bicubic(const Image& hr, int64_t scale) {
  if (scale < 1) throw ValidationError("scale must be positive");
  if (hr.height % scale != 0 || hr.width % scale != 0)
    throw ShapeError("degrade_bicubic: " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                     " is not divisible by " + std::to_string(scale));
  const int64_t out_h = hr.height / scale, out_w = hr.width / scale;
  const auto row_taps = downsample_taps(hr.height, scale);
  const auto col_taps = downsample_taps(hr.width, scale);

  // columns first, then rows
  std::vector<double> horizontal(static_cast<std::size_t>(hr.channels * hr.height * out_w));
  for (int64_t c = 0; c < hr.channels; ++c)
    for (int64_t y = 0; y < hr.height; ++y)
      for (int64_t x = 0; x < out_w; ++x) {
        const auto& t = col_taps[x];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * hr.at(c, y, t.index[k]);
        horizontal[(c * hr.height + y) * out_w + x] = acc;
      }

  Image lr(hr.channels, out_h, out_w);
  for (int64_t c = 0; c < hr.channels; ++c)
    for (int64_t y = 0; y < out_h; ++y) {
      const auto& t = row_taps[y];
      for (int64_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k)
          acc += t.weight[k] * horizontal[(c * hr.height + t.index[k]) * out_w + x];
        lr.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  return lr;
}

Image modcrop(const Image& image, int64_t scale) {
  return crop(image, 0, 0, image.height - image.height % scale, image.width - image.width % scale);
}

PatchOffset random_patch_offset(int64_t height, int64_t width, int64_t patch, int64_t scale, std::mt19937_64& rng) {
  if (height < patch || width < patch)
    throw ShapeError("sub-image " + std::to_string(height) + "x" + std::to_string(width) + " smaller than patch " +
                     std::to_string(patch));
  if (patch % scale != 0) throw ShapeError("patch size must be divisible by the scale");
  std::uniform_int_distribution<int64_t> ys(0, (height - patch) / scale);
  std::uniform_int_distribution<int64_t> xs(0, (width - patch) / scale);
  PatchOffset offset;
  offset.lr_y = ys(rng);
  offset.lr_x = xs(rng);
  offset.hr_y = offset.lr_y * scale;
  offset.hr_x = offset.lr_x * scale;
  return offset;
}

ImagePairSample crop_patch_pair(const SubImage& sub, const PatchOffset& offset, int64_t patch, int64_t scale) {
  ImagePairSample sample;
  sample.hr = crop(sub.hr, offset.hr_y, offset.hr_x, patch, patch);
  sample.lr = crop(sub.lr, offset.lr_y, offset.lr_x, patch / scale, patch / scale);
  sample.source_id = sub.id;
  sample.hr_y = offset.hr_y;
  sample.hr_x = offset.hr_x;
  return sample;
}

ImagePairSample random_patch_pair(const SubImage& sub, int64_t patch, int64_t scale, std::mt19937_64& rng) {
  return crop_patch_pair(sub, random_patch_offset(sub.hr.height, sub.hr.width, patch, scale, rng), patch, scale);
}

// ---------------------------------------------------------- TrainingSet

TrainingSet::TrainingSet(std::vector<std::filesystem::path> files, int64_t scale, std::size_t max_cached)
    : files_(std::move(files)), scale_(scale), max_cached_(max_cached) {
  if (files_.empty()) throw ValidationError("training set is empty");
}

TrainingSet::TrainingSet(TrainingSet&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  files_ = std::move(other.files_);
  in_memory_ = std::move(other.in_memory_);
  scale_ = other.scale_;
  max_cached_ = other.max_cached_;
  cache_ = std::move(other.cache_);
}

TrainingSet TrainingSet::from_directory(const std::filesystem::path& dir, int64_t scale, std::size_t max_cached) {
  return TrainingSet(list_pngs(dir), scale, max_cached);
}

TrainingSet TrainingSet::from_images(std::vector<std::pair<std::string, Image>> images, int64_t scale) {
  if (images.empty()) throw ValidationError("training set is empty");
  TrainingSet set;
  set.scale_ = scale;
  for (auto& [id, image] : images) {
    auto hr = modcrop(image, scale);
    auto lr = degrade_bicubic(hr, scale);
    set.in_memory_.push_back(std::make_shared<const SubImage>(SubImage{id, std::move(hr), std::move(lr)}));
  }
  return set;
}

std::shared_ptr<const SubImage> TrainingSet::get(std::size_t index) const {
  if (index >= size()) throw ValidationError("training set index out of range");
  if (files_.empty()) return in_memory_[index];
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  }
  auto hr = modcrop(read_png(files_[index]), scale_);
  auto lr = degrade_bicubic(hr, scale_);
  auto sub = std::make_shared<const SubImage>(SubImage{files_[index].stem().string(), std::move(hr), std::move(lr)});
  std::lock_guard lock(mutex_);
  if (cache_.size() < max_cached_) cache_.emplace(index, sub);
  return sub;
}

// ------------------------------------------------------------- batching

Batch make_batch(std::span<const ImagePairSample> samples) {
  if (samples.empty()) throw ValidationError("make_batch: no samples");
  std::vector<torch::Tensor> hr, lr;
  Batch batch;
  for (const auto& s : samples) {
    if (!s.hr.same_shape(samples.front().hr) || !s.lr.same_shape(samples.front().lr))
      throw ShapeError("make_batch: samples differ in shape");
    hr.push_back(to_tensor(s.hr));
    lr.push_back(to_tensor(s.lr));
    batch.provenance.push_back(s.source_id + "@" + std::to_string(s.hr_y) + "," + std::to_string(s.hr_x));
  }
  batch.hr = torch::stack(hr);
  batch.lr = torch::stack(lr);
  return batch;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

BatchSampler::BatchSampler(const TrainingSet& dataset, SamplerOptions options)
    : dataset_(dataset), options_(options) {
  if (dataset_.size() == 0) throw ValidationError("BatchSampler: empty dataset");
  if (options_.batch_size < 1) throw ValidationError("batch_size must be positive");
}

const std::vector<std::size_t>& BatchSampler::permutation(int64_t epoch) const {
  std::lock_guard lock(mutex_);
  if (auto it = permutations_.find(epoch); it != permutations_.end()) return it->second;
  if (permutations_.size() > 8) permutations_.erase(permutations_.begin());
  std::vector<std::size_t> order(dataset_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(options_.seed, 0x5EED0000ull + static_cast<uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return permutations_.emplace(epoch, std::move(order)).first->second;
}

std::size_t BatchSampler::dataset_index(int64_t position) const {
  const auto n = static_cast<int64_t>(dataset_.size());
  return permutation(position / n)[static_cast<std::size_t>(position % n)];
}

Batch BatchSampler::batch_at(int64_t iteration) const {
  std::vector<ImagePairSample> samples;
  samples.reserve(static_cast<std::size_t>(options_.batch_size));
  for (int64_t k = 0; k < options_.batch_size; ++k) {
    const int64_t position = iteration * options_.batch_size + k;
    const auto sub = dataset_.get(dataset_index(position));
    std::mt19937_64 rng(mix_seed(options_.seed, static_cast<uint64_t>(position)));
    samples.push_back(random_patch_pair(*sub, options_.patch, dataset_.scale(), rng));
  }
  return make_batch(samples);
}

// ---------------------------------------------------------------- files

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw LoadError("cannot open manifest " + manifest.string());
  std::vector<std::filesystem::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = manifest.parent_path() / p;
    paths.push_back(p);
  }
  return paths;
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::filesystem::path> prepare_tiles(const std::filesystem::path& manifest,
                                                 const std::filesystem::path& out_dir, int64_t tile, int64_t stride) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& source : read_manifest(manifest)) {
    const auto image = read_png(source);
    for (const auto& t : tile_image(image, tile, stride)) {
      auto path = out_dir / (source.stem().string() + "_" + std::to_string(t.y) + "_" + std::to_string(t.x) + ".png");
      write_png(path, t.image);
      written.push_back(std::move(path));
    }
  }
  return written;
}

}  // namespace dpsr
