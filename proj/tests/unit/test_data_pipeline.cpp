#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "dpsr/data_pipeline.hpp"
#include "dpsr/errors.hpp"
#include "support.hpp"

using namespace dpsr;

namespace {

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return reflect(-i - 1, n);
  if (i >= n) return reflect(2 * n - i - 1, n);
  return i;
}

// Direct 2D weighted sum, one output pixel at a time.
double bicubic_oracle(const Image& hr, int64_t c, int64_t oy, int64_t ox, int64_t s) {
  const double cy = (oy + 0.5) * s - 0.5, cx = (ox + 0.5) * s - 0.5;
  double num = 0.0, den = 0.0;
  for (int64_t j = oy * s - 3 * s; j <= oy * s + 3 * s; ++j)
    for (int64_t k = ox * s - 3 * s; k <= ox * s + 3 * s; ++k) {
      const double w = cubic_kernel((cy - j) / s) * cubic_kernel((cx - k) / s);
      num += w * hr.at(c, reflect(j, hr.height), reflect(k, hr.width));
      den += w;
    }
  return std::clamp(num / den, 0.0, 1.0);
}

}  // namespace

TEST_CASE("tile counts follow the sliding-window formula") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int64_t> size(1, 1400), tile(16, 600), stride(8, 600);
  for (int k = 0; k < 50; ++k) {
    const int64_t h = size(rng), w = size(rng), t = tile(rng), s = stride(rng);
    int64_t brute = 0;
    for (int64_t y = 0; y + t <= h; y += s)
      for (int64_t x = 0; x + t <= w; x += s) ++brute;
    CHECK(tile_count(h, w, t, s) == brute);
  }
  CHECK(tile_count(2040, 1356, 480, 480) == 4 * 2);
  CHECK(tile_count(100, 1000, 480, 480) == 0);
  CHECK_THROWS_AS(tile_count(10, 10, 0, 1), ValidationError);

  std::mt19937_64 r(1);
  const auto img = testing::random_image(3, 50, 70, r);
  const auto tiles = tile_image(img, 20, 15);
  CHECK(static_cast<int64_t>(tiles.size()) == tile_count(50, 70, 20, 15));
  const auto& last = tiles.back();
  CHECK(last.y == 30);
  CHECK(last.x == 45);
  CHECK(last.image.at(2, 19, 19) == img.at(2, 49, 64));
  CHECK(tile_image(img, 64, 64).empty());
}

TEST_CASE("cubic kernel") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == 0.0);
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(-1.5) == cubic_kernel(1.5));
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625));
  double sum = 0.0;  // partition of unity at any shift
  for (int j = -2; j <= 2; ++j) sum += cubic_kernel(0.3 + j);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bicubic degradation matches a direct 2D sum") {
  std::mt19937_64 rng(8);
  for (int64_t s : {2, 3, 4}) {
    const auto hr = testing::random_image(3, 6 * s, 5 * s, rng);
    const auto lr = degrade_bicubic(hr, s);
    CHECK(lr.height == 6);
    CHECK(lr.width == 5);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < 6; ++y)
        for (int64_t x = 0; x < 5; ++x) CHECK(lr.at(c, y, x) == doctest::Approx(bicubic_oracle(hr, c, y, x, s)).epsilon(1e-5));
  }
  Image flat(3, 16, 16, 0.25f);
  for (float v : degrade_bicubic(flat, 4).data) CHECK(v == doctest::Approx(0.25f));
  CHECK_THROWS_AS(degrade_bicubic(Image(3, 10, 12), 4), ShapeError);
}

TEST_CASE("modcrop") {
  const auto m = modcrop(Image(3, 101, 66), 4);
  CHECK(m.height == 100);
  CHECK(m.width == 64);
}

TEST_CASE("patches are cut from the pre-degraded image") {
  std::mt19937_64 rng(2);
  auto set = TrainingSet::from_images({{"a", testing::random_image(3, 48, 40, rng)}}, 4);
  const auto sub = set.get(0);
  CHECK(sub->lr.height == 12);
  std::mt19937_64 pick(9);
  for (int k = 0; k < 20; ++k) {
    const auto sample = random_patch_pair(*sub, 16, 4, pick);
    CHECK(sample.hr_y % 4 == 0);
    CHECK(sample.hr_x % 4 == 0);
    CHECK(sample.hr_y + 16 <= 48);
    CHECK(sample.hr.height == 16);
    CHECK(sample.lr.height == 4);
    CHECK(sample.lr.at(1, 2, 3) == sub->lr.at(1, sample.hr_y / 4 + 2, sample.hr_x / 4 + 3));
    CHECK(sample.hr.at(0, 5, 7) == sub->hr.at(0, sample.hr_y + 5, sample.hr_x + 7));
  }
  std::mt19937_64 r2(0);
  CHECK_THROWS_AS(random_patch_offset(8, 40, 16, 4, r2), ShapeError);
  CHECK_THROWS_AS(random_patch_offset(40, 40, 18, 4, r2), ShapeError);
}

TEST_CASE("batch sampler is a pure function of seed and iteration") {
  std::mt19937_64 rng(4);
  std::vector<std::pair<std::string, Image>> images;
  for (int i = 0; i < 5; ++i) images.emplace_back("img" + std::to_string(i), testing::random_image(3, 32, 32, rng));
  const auto set = TrainingSet::from_images(images, 4);
  BatchSampler a(set, {3, 16, 11}), b(set, {3, 16, 11}), c(set, {3, 16, 12});
  const auto b7 = b.batch_at(7);
  (void)a.batch_at(0);
  CHECK(torch::equal(a.batch_at(7).hr, b7.hr));
  CHECK(a.batch_at(7).provenance == b7.provenance);
  CHECK_FALSE(torch::equal(c.batch_at(7).hr, b7.hr));
  CHECK(b7.hr.sizes() == torch::IntArrayRef({3, 3, 16, 16}));
  CHECK(b7.lr.sizes() == torch::IntArrayRef({3, 3, 4, 4}));

  // each epoch visits every image once
  for (int64_t epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (int64_t p = 0; p < 5; ++p) seen.insert(a.dataset_index(epoch * 5 + p));
    CHECK(seen.size() == 5);
  }
}

TEST_CASE("mix_seed") {
  std::set<uint64_t> seen;
  for (uint64_t s = 0; s < 4; ++s)
    for (uint64_t k = 0; k < 64; ++k) seen.insert(mix_seed(s, k));
  CHECK(seen.size() == 256);
  CHECK(mix_seed(7, 3) == mix_seed(7, 3));
}

TEST_CASE("manifest tiling and directory sets") {
  const auto dir = testing::scratch_dir("pipeline");
  std::mt19937_64 rng(6);
  write_png(dir / "big.png", testing::random_image(3, 50, 40, rng));
  write_png(dir / "small.png", testing::random_image(3, 10, 10, rng));
  {
    std::ofstream m(dir / "manifest.txt");
    m << "# sources\nbig.png\n\nsmall.png\n";
  }
  CHECK(read_manifest(dir / "manifest.txt").size() == 2);
  const auto tiles = prepare_tiles(dir / "manifest.txt", dir / "tiles", 20, 20);
  REQUIRE(tiles.size() == 4);
  CHECK(tiles[0].filename() == "big_0_0.png");
  CHECK(tiles[3].filename() == "big_20_20.png");
  CHECK(read_png(tiles[3]).height == 20);

  const auto set = TrainingSet::from_directory(dir / "tiles", 4);
  CHECK(set.size() == 4);
  CHECK(set.get(0)->id == "big_0_0");
  CHECK(set.get(0)->lr.width == 5);
  CHECK(set.get(1) == set.get(1));  // cached
  CHECK_THROWS_AS(set.get(4), ValidationError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.txt"), LoadError);
  CHECK_THROWS_AS(TrainingSet::from_directory(dir / "nothing", 4), LoadError);
}
