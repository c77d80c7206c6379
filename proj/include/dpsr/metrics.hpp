#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpsr/image.hpp"

namespace dpsr {

// Single-channel image in double precision, row-major.
struct Plane {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int64_t h, int64_t w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h * w), fill) {}

  double& at(int64_t y, int64_t x) { return data[static_cast<std::size_t>(y * width + x)]; }
  double at(int64_t y, int64_t x) const { return data[static_cast<std::size_t>(y * width + x)]; }
};

// BT.601 luma: (65.481 R + 128.553 G + 24.966 B + 16) / 255.
Plane rgb_to_y(const Image& rgb);
Plane channel_plane(const Image& image, int64_t channel);

// Removes `pixels` from every edge. Both dimensions must exceed 2*pixels.
Image crop_border(const Image& image, int64_t pixels);
Plane crop_border(const Plane& plane, int64_t pixels);

// 10 log10(1 / MSE) for signals in [0,1]; +inf for identical inputs.
double psnr(const Plane& a, const Plane& b);

// Mean SSIM over all fully contained 11x11 windows (Gaussian, sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1. Planes must be at least 11x11.
double ssim(const Plane& a, const Plane& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Full-reference perceptual distance between two RGB images in [0,1].
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double distance(const Image& a, const Image& b) const = 0;
};

struct EvalOptions {
  int64_t border = 4;
  bool y_channel = true;
  int64_t scale = 4;          // recorded only
  bool lpips_crop = false;    // apply the border crop to LPIPS inputs too
  std::shared_ptr<const PerceptualMetric> lpips;  // null: LPIPS reported as absent
  int threads = 1;
};

struct MetricRow {
  std::string image;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;

  bool operator==(const MetricRow&) const = default;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> mean_lpips;  // present only if every row has LPIPS

  // protocol metadata
  int64_t border = 4;
  bool y_channel = true;
  int64_t scale = 4;
  bool lpips_crop = false;
  std::string lpips_metric;  // empty when absent

  void aggregate();

  // CSV "image,psnr_db,ssim,lpips" with a final "__mean__" row; absent LPIPS
  // is written as NA. Metadata goes to a JSON sidecar (<stem>.meta.json).
  void write_csv(const std::filesystem::path& path) const;
  static MetricReport read_csv(const std::filesystem::path& path);
};

struct EvalPair {
  std::string id;
  Image sr;
  Image hr;
};

MetricReport evaluate_pairs(const std::vector<EvalPair>& pairs, const EvalOptions& options = {});

// Pairs PNGs by file name. Every file must have a partner; otherwise a
// ValidationError lists the unmatched names. Rows are sorted by name.
MetricReport evaluate_dataset(const std::filesystem::path& sr_dir, const std::filesystem::path& hr_dir,
                              const EvalOptions& options = {});

std::filesystem::path metadata_path(const std::filesystem::path& csv);

}  // namespace dpsr
