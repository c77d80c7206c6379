#include <doctest.h>

#include <cmath>
#include <random>

#include "dpsr/errors.hpp"
#include "dpsr/lpips.hpp"
#include "dpsr/metrics.hpp"
#include "support.hpp"

using namespace dpsr;

namespace {

Plane random_plane(int64_t h, int64_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane p(h, w);
  for (auto& v : p.data) v = u(rng);
  return p;
}

Plane noisy(const Plane& p, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Plane out = p;
  for (auto& v : out.data) v = std::clamp(v + n(rng), 0.0, 1.0);
  return out;
}

// Per-window weighted statistics computed directly, with centred moments.
double ssim_oracle(const Plane& a, const Plane& b) {
  double g[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  for (auto& row : g)
    for (double& v : row) v /= total;
  const double c1 = 0.0001, c2 = 0.0009;
  double sum = 0.0;
  int64_t count = 0;
  for (int64_t y = 0; y + 11 <= a.height; ++y)
    for (int64_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i][j] * a.at(y + i, x + j);
          mb += g[i][j] * b.at(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = a.at(y + i, x + j) - ma, db = b.at(y + i, x + j) - mb;
          va += g[i][j] * da * da;
          vb += g[i][j] * db * db;
          cov += g[i][j] * da * db;
        }
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

double psnr_oracle(const Plane& a, const Plane& b) {
  long double se = 0;
  for (int64_t y = 0; y < a.height; ++y)
    for (int64_t x = 0; x < a.width; ++x) se += std::pow(static_cast<long double>(a.at(y, x) - b.at(y, x)), 2);
  return static_cast<double>(-10.0L * std::log10(se / (a.height * a.width)));
}

Image rgb(int64_t h, int64_t w, float r, float g, float b) {
  Image img(3, h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  return img;
}

}  // namespace

TEST_CASE("BT.601 luma") {
  CHECK(rgb_to_y(rgb(1, 1, 0, 0, 0)).at(0, 0) == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
  CHECK(rgb_to_y(rgb(1, 1, 1, 1, 1)).at(0, 0) == doctest::Approx(235.0 / 255.0).epsilon(1e-7));
  CHECK(rgb_to_y(rgb(1, 1, 1, 0, 0)).at(0, 0) == doctest::Approx(81.481 / 255.0).epsilon(1e-7));
  CHECK(rgb_to_y(rgb(1, 1, 0, 0, 1)).at(0, 0) == doctest::Approx(40.966 / 255.0).epsilon(1e-7));
  CHECK_THROWS_AS(rgb_to_y(Image(1, 4, 4)), ShapeError);
}

TEST_CASE("border crop") {
  const auto a = crop_border(Image(3, 128, 128), 4);
  CHECK(a.height == 120);
  CHECK(a.width == 120);
  const auto b = crop_border(Plane(100, 60), 4);
  CHECK(b.height == 92);
  CHECK(b.width == 52);
  CHECK_THROWS_AS(crop_border(Image(3, 8, 8), 4), ShapeError);
  CHECK(crop_border(Image(3, 9, 9), 4).height == 1);
}

TEST_CASE("PSNR") {
  Plane a(16, 16, 0.5), b(16, 16, 0.25);
  CHECK(psnr(a, b) == doctest::Approx(12.041199826559248).epsilon(1e-12));
  CHECK(std::isinf(psnr(a, a)));
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto x = random_plane(24, 31, rng), y = random_plane(24, 31, rng);
    CHECK(std::abs(psnr(x, y) - psnr_oracle(x, y)) < 1e-9);
    CHECK(psnr(x, y) == psnr(y, x));
  }
  CHECK_THROWS_AS(psnr(Plane(3, 3), Plane(3, 4)), ShapeError);
}

TEST_CASE("SSIM") {
  Plane a(16, 16, 0.5), b(16, 16, 0.25);
  const double closed = (2 * 0.5 * 0.25 + kSsimC1) / (0.25 + 0.0625 + kSsimC1);
  CHECK(closed == doctest::Approx(0.8000639795).epsilon(1e-9));
  CHECK(ssim(a, b) == doctest::Approx(closed).epsilon(1e-12));
  std::mt19937_64 rng(2);
  const auto x = random_plane(20, 23, rng);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  for (int k = 0; k < 10; ++k) {
    const auto p = random_plane(19, 27, rng), q = noisy(p, 0.1, rng);
    const double s = ssim(p, q);
    CHECK(std::abs(s - ssim_oracle(p, q)) < 1e-6);
    CHECK(std::abs(s - ssim(q, p)) < 1e-12);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ssim(Plane(10, 30), Plane(10, 30)), ShapeError);
}

TEST_CASE("metrics degrade monotonically with noise") {
  std::mt19937_64 rng(5);
  const auto clean = random_plane(40, 40, rng);
  double last_psnr = INFINITY, last_ssim = 1.0;
  for (double sigma : {0.01, 0.03, 0.1, 0.3}) {
    std::mt19937_64 r(7);
    const auto n = noisy(clean, sigma, r);
    CHECK(psnr(clean, n) < last_psnr);
    CHECK(ssim(clean, n) < last_ssim);
    last_psnr = psnr(clean, n);
    last_ssim = ssim(clean, n);
  }
}

TEST_CASE("evaluation protocol toggles") {
  std::mt19937_64 rng(9);
  const auto hr = testing::random_image(3, 32, 32, rng);
  auto sr = hr;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t x = 0; x < 32; ++x) sr.at(c, 0, x) = 1.0f - sr.at(c, 0, x);  // damage only the top row
  const std::vector<EvalPair> pairs = {{"a", sr, hr}};
  EvalOptions opt;
  const auto cropped = evaluate_pairs(pairs, opt);
  CHECK(std::isinf(cropped.rows[0].psnr_db));
  opt.border = 0;
  const auto full = evaluate_pairs(pairs, opt);
  CHECK(std::isfinite(full.rows[0].psnr_db));
  opt.y_channel = false;
  const auto rgb_report = evaluate_pairs(pairs, opt);
  CHECK(rgb_report.rows[0].psnr_db != full.rows[0].psnr_db);
  CHECK_FALSE(rgb_report.y_channel);
  CHECK_FALSE(full.rows[0].lpips.has_value());
  CHECK_FALSE(full.mean_lpips.has_value());
}

TEST_CASE("LPIPS plugin") {
  const auto lpips = LpipsVgg::from_archive(random_lpips_archive(3));
  std::mt19937_64 rng(4);
  const auto a = testing::random_image(3, 32, 32, rng);
  const auto b = testing::random_image(3, 32, 32, rng);
  CHECK(lpips->distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));
  const double d = lpips->distance(a, b);
  CHECK(d > 0.0);
  CHECK(lpips->distance(b, a) == doctest::Approx(d).epsilon(1e-5));
  CHECK_THROWS_AS(lpips->distance(Image(3, 8, 8), Image(3, 8, 8)), ShapeError);

  EvalOptions opt;
  opt.lpips = lpips;
  const auto report = evaluate_pairs({{"x", b, a}, {"y", a, a}}, opt);
  REQUIRE(report.rows[0].lpips.has_value());
  CHECK(*report.rows[0].lpips == doctest::Approx(d).epsilon(1e-5));
  REQUIRE(report.mean_lpips.has_value());
  CHECK(report.lpips_metric == "lpips-vgg");

  Archive partial;
  const auto full = random_lpips_archive(3);
  for (const auto& n : full.names())
    if (n != "lin2.weight") partial.put(n, full.tensor(n));
  CHECK_THROWS_AS(LpipsVgg::from_archive(partial), LoadError);
}

TEST_CASE("dataset evaluation and report files") {
  const auto dir = testing::scratch_dir("metrics");
  std::mt19937_64 rng(6);
  std::filesystem::create_directories(dir / "sr");
  std::filesystem::create_directories(dir / "hr");
  for (const auto* name : {"b.png", "a.png"}) {
    const auto hr = testing::random_image(3, 24, 24, rng);
    write_png(dir / "hr" / name, hr);
    write_png(dir / "sr" / name, testing::random_image(3, 24, 24, rng));
  }
  EvalOptions opt;
  opt.threads = 2;
  auto report = evaluate_dataset(dir / "sr", dir / "hr", opt);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].image == "a.png");
  CHECK(report.mean_psnr_db == doctest::Approx((report.rows[0].psnr_db + report.rows[1].psnr_db) / 2));
  opt.threads = 1;
  CHECK((evaluate_dataset(dir / "sr", dir / "hr", opt).rows == report.rows));

  report.rows[1].lpips = 0.125;
  report.aggregate();
  CHECK_FALSE(report.mean_lpips.has_value());
  report.write_csv(dir / "out" / "set.csv");
  CHECK(std::filesystem::exists(dir / "out" / "set.meta.json"));
  const auto back = MetricReport::read_csv(dir / "out" / "set.csv");
  CHECK((back.rows == report.rows));
  CHECK(back.mean_psnr_db == report.mean_psnr_db);
  CHECK(back.border == 4);
  CHECK(back.y_channel);

  write_png(dir / "sr" / "c.png", Image(3, 24, 24));
  write_png(dir / "hr" / "d.png", Image(3, 24, 24));
  try {
    evaluate_dataset(dir / "sr", dir / "hr");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("c.png (SR only)") != std::string::npos);
    CHECK(msg.find("d.png (HR only)") != std::string::npos);
  }
}
