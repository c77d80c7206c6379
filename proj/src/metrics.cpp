#include "dpsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "dpsr/config_io.hpp"
#include "dpsr/data_pipeline.hpp"
#include "dpsr/errors.hpp"

namespace dpsr {
namespace {

void require_same_shape(const Plane& a, const Plane& b, const char* what) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
}

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  const int half = kSsimWindow / 2;
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    w[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable "valid" filtering with the SSIM window.
Plane filter_valid(const Plane& p, const std::vector<double>& w) {
  const int64_t k = kSsimWindow;
  const int64_t oh = p.height - k + 1, ow = p.width - k + 1;
  Plane rows(p.height, ow);
  for (int64_t y = 0; y < p.height; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t i = 0; i < k; ++i) s += w[i] * p.at(y, x + i);
      rows.at(y, x) = s;
    }
  Plane out(oh, ow);
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t i = 0; i < k; ++i) s += w[i] * rows.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.height, a.width);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_real(*v) : "NA"; }

MetricRow evaluate_one(const EvalPair& pair, const EvalOptions& options) {
  if (!pair.sr.same_shape(pair.hr))
    throw ShapeError("image '" + pair.id + "': SR is " + std::to_string(pair.sr.height) + "x" +
                     std::to_string(pair.sr.width) + ", HR is " + std::to_string(pair.hr.height) + "x" +
                     std::to_string(pair.hr.width));
  if (pair.sr.channels != 3) throw ShapeError("image '" + pair.id + "' is not RGB");
  const auto sr = crop_border(pair.sr, options.border);
  const auto hr = crop_border(pair.hr, options.border);

  MetricRow row;
  row.image = pair.id;
  if (options.y_channel) {
    const auto ya = rgb_to_y(sr), yb = rgb_to_y(hr);
    row.psnr_db = psnr(ya, yb);
    row.ssim = ssim(ya, yb);
  } else {
    // PSNR over all RGB samples, SSIM averaged over channels
    double se = 0.0, ssim_sum = 0.0;
    for (int64_t c = 0; c < 3; ++c) {
      const auto pa = channel_plane(sr, c), pb = channel_plane(hr, c);
      for (std::size_t i = 0; i < pa.data.size(); ++i) se += (pa.data[i] - pb.data[i]) * (pa.data[i] - pb.data[i]);
      ssim_sum += ssim(pa, pb);
    }
    const double mse = se / static_cast<double>(sr.data.size());
    row.psnr_db = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
    row.ssim = ssim_sum / 3.0;
  }
  if (options.lpips) {
    row.lpips = options.lpips_crop ? options.lpips->distance(sr, hr) : options.lpips->distance(pair.sr, pair.hr);
  }
  return row;
}

}  // namespace

Plane rgb_to_y(const Image& rgb) {
  if (rgb.channels != 3) throw ShapeError("rgb_to_y expects 3 channels, got " + std::to_string(rgb.channels));
  Plane y(rgb.height, rgb.width);
  for (int64_t r = 0; r < rgb.height; ++r)
    for (int64_t c = 0; c < rgb.width; ++c)
      y.at(r, c) = (65.481 * rgb.at(0, r, c) + 128.553 * rgb.at(1, r, c) + 24.966 * rgb.at(2, r, c) + 16.0) / 255.0;
  return y;
}

Plane channel_plane(const Image& image, int64_t channel) {
  if (channel < 0 || channel >= image.channels) throw ShapeError("channel index out of range");
  Plane p(image.height, image.width);
  for (int64_t r = 0; r < image.height; ++r)
    for (int64_t c = 0; c < image.width; ++c) p.at(r, c) = image.at(channel, r, c);
  return p;
}

Image crop_border(const Image& image, int64_t pixels) {
  if (pixels < 0) throw ValidationError("border must be non-negative");
  if (image.height <= 2 * pixels || image.width <= 2 * pixels)
    throw ShapeError("crop_border: " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is too small for a " + std::to_string(pixels) + "-pixel border");
  return crop(image, pixels, pixels, image.height - 2 * pixels, image.width - 2 * pixels);
}

Plane crop_border(const Plane& plane, int64_t pixels) {
  if (pixels < 0) throw ValidationError("border must be non-negative");
  if (plane.height <= 2 * pixels || plane.width <= 2 * pixels)
    throw ShapeError("crop_border: " + std::to_string(plane.height) + "x" + std::to_string(plane.width) +
                     " is too small for a " + std::to_string(pixels) + "-pixel border");
  Plane out(plane.height - 2 * pixels, plane.width - 2 * pixels);
  for (int64_t y = 0; y < out.height; ++y)
    for (int64_t x = 0; x < out.width; ++x) out.at(y, x) = plane.at(y + pixels, x + pixels);
  return out;
}

double psnr(const Plane& a, const Plane& b) {
  require_same_shape(a, b, "psnr");
  if (a.data.empty()) throw ShapeError("psnr: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Plane& a, const Plane& b) {
  require_same_shape(a, b, "ssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow)
    throw ShapeError("ssim: inputs must be at least 11x11, got " + std::to_string(a.height) + "x" +
                     std::to_string(a.width));
  static const auto w = gaussian_window();
  const auto mu_a = filter_valid(a, w), mu_b = filter_valid(b, w);
  const auto aa = filter_valid(product(a, a), w);
  const auto bb = filter_valid(product(b, b), w);
  const auto ab = filter_valid(product(a, b), w);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = aa.data[i] - ma * ma, vb = bb.data[i] - mb * mb, cov = ab.data[i] - ma * mb;
    total += ((2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2)) /
             ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
  }
  return total / static_cast<double>(mu_a.data.size());
}

// ---------------------------------------------------------------- report

void MetricReport::aggregate() {
  mean_psnr_db = mean_ssim = 0.0;
  mean_lpips.reset();
  if (rows.empty()) return;
  double lp = 0.0;
  bool all_lpips = true;
  for (const auto& r : rows) {
    mean_psnr_db += r.psnr_db;
    mean_ssim += r.ssim;
    if (r.lpips) lp += *r.lpips;
    else all_lpips = false;
  }
  const auto n = static_cast<double>(rows.size());
  mean_psnr_db /= n;
  mean_ssim /= n;
  if (all_lpips) mean_lpips = lp / n;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".meta.json");
  return p;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "image,psnr_db,ssim,lpips\n";
  for (const auto& r : rows)
    out << r.image << ',' << format_real(r.psnr_db) << ',' << format_real(r.ssim) << ',' << format_optional(r.lpips)
        << '\n';
  out << "__mean__," << format_real(mean_psnr_db) << ',' << format_real(mean_ssim) << ','
      << format_optional(mean_lpips) << '\n';

  const nlohmann::json meta = {{"border", border},         {"y_channel", y_channel},
                               {"scale", scale},           {"lpips_crop", lpips_crop},
                               {"lpips_metric", lpips_metric}, {"images", rows.size()}};
  std::ofstream mout(metadata_path(path));
  mout << meta.dump(2) << '\n';
}

MetricReport MetricReport::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "image,psnr_db,ssim,lpips")
    throw LoadError("not a metric report: " + path.string());
  MetricReport report;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string s; std::getline(ss, s, ',');) f.push_back(s);
    if (f.size() != 4) throw LoadError("malformed report line: " + line);
    const std::optional<double> lp = f[3] == "NA" ? std::nullopt : std::optional<double>(parse_real(f[3]));
    if (f[0] == "__mean__") {
      report.mean_psnr_db = parse_real(f[1]);
      report.mean_ssim = parse_real(f[2]);
      report.mean_lpips = lp;
      saw_mean = true;
    } else {
      report.rows.push_back({f[0], parse_real(f[1]), parse_real(f[2]), lp});
    }
  }
  if (!saw_mean) report.aggregate();
  const auto meta_file = metadata_path(path);
  if (std::filesystem::exists(meta_file)) {
    std::ifstream min(meta_file);
    const auto meta = nlohmann::json::parse(min);
    report.border = meta.value("border", report.border);
    report.y_channel = meta.value("y_channel", report.y_channel);
    report.scale = meta.value("scale", report.scale);
    report.lpips_crop = meta.value("lpips_crop", report.lpips_crop);
    report.lpips_metric = meta.value("lpips_metric", std::string());
  }
  return report;
}

MetricReport evaluate_pairs(const std::vector<EvalPair>& pairs, const EvalOptions& options) {
  MetricReport report;
  report.border = options.border;
  report.y_channel = options.y_channel;
  report.scale = options.scale;
  report.lpips_crop = options.lpips_crop;
  if (options.lpips) report.lpips_metric = options.lpips->name();
  report.rows.resize(pairs.size());

  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  if (threads == 1 || pairs.size() < 2) {
    for (std::size_t i = 0; i < pairs.size(); ++i) report.rows[i] = evaluate_one(pairs[i], options);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t t = 0; t < threads; ++t)
      jobs.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t i = t; i < pairs.size(); i += threads) report.rows[i] = evaluate_one(pairs[i], options);
      }));
    for (auto& j : jobs) j.get();
  }
  report.aggregate();
  return report;
}

MetricReport evaluate_dataset(const std::filesystem::path& sr_dir, const std::filesystem::path& hr_dir,
                              const EvalOptions& options) {
  std::map<std::string, std::filesystem::path> sr, hr;
  for (const auto& p : list_pngs(sr_dir)) sr[p.filename().string()] = p;
  for (const auto& p : list_pngs(hr_dir)) hr[p.filename().string()] = p;

  std::vector<std::string> unmatched;
  for (const auto& [name, _] : sr)
    if (!hr.count(name)) unmatched.push_back(name + " (SR only)");
  for (const auto& [name, _] : hr)
    if (!sr.count(name)) unmatched.push_back(name + " (HR only)");
  if (!unmatched.empty()) {
    std::string msg = "unmatched files:";
    for (const auto& u : unmatched) msg += " " + u;
    throw ValidationError(msg);
  }
  if (sr.empty()) throw ValidationError("no PNG files in " + sr_dir.string());

  std::vector<EvalPair> pairs;
  for (const auto& [name, path] : sr) pairs.push_back({name, read_png(path), read_png(hr.at(name))});
  return evaluate_pairs(pairs, options);
}

}  // namespace dpsr
