#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dpsr/errors.hpp"
#include "dpsr/feature_extraction.hpp"
#include "dpsr/losses.hpp"
#include "dpsr/metrics.hpp"
#include "dpsr/synthetic.hpp"
#include "dpsr/training.hpp"
#include "dpsr/config_io.hpp"

namespace py = pybind11;
using namespace dpsr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (C, H, W) or (H, W) -> Image
Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an array of shape (C, H, W) or (H, W)");
  const int64_t c = a.ndim() == 3 ? a.shape(0) : 1;
  const int64_t h = a.shape(a.ndim() - 2), w = a.shape(a.ndim() - 1);
  Image img(c, h, w);
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

FloatArray from_image(const Image& img) {
  FloatArray out({img.channels, img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Plane to_plane(const DoubleArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Plane p(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), p.data.begin());
  return p;
}

DoubleArray from_plane(const Plane& p) {
  DoubleArray out({p.height, p.width});
  std::copy(p.data.begin(), p.data.end(), out.mutable_data());
  return out;
}

LossWeights weights(double mu, double c, double lambda_content, double eta_adversarial, double gamma_dp) {
  LossWeights w;
  w.mu = mu;
  w.c = c;
  w.lambda_content = lambda_content;
  w.eta_adversarial = eta_adversarial;
  w.gamma_dp = gamma_dp;
  return w;
}

py::dict breakdown_dict(const DpLossBreakdown& b) {
  py::dict d;
  d["l_vgg"] = b.l_vgg;
  d["l_res"] = b.l_res;
  d["zeta"] = b.zeta;
  d["weighted_res_term"] = b.weighted_res_term;
  d["l_dp"] = b.l_dp;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual perceptual loss super-resolution toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<LoadError>(m, "LoadError", base);
  py::register_exception<DivergenceError>(m, "DivergenceError", base);

  m.attr("INFINITE_MU") = kInfiniteMu;

  m.def("zeta", &zeta, py::arg("l_vgg"), py::arg("l_res"), py::arg("c") = LossWeights{}.c);
  m.def(
      "dp_loss",
      [](double l_vgg, double l_res, double mu, double c, bool dynamic) {
        return breakdown_dict(dp_loss(l_vgg, l_res, weights(mu, c, 1e-2, 5e-3, 1.0),
                                      dynamic ? ResnetWeighting::dynamic : ResnetWeighting::unit));
      },
      py::arg("l_vgg"), py::arg("l_res"), py::arg("mu") = LossWeights{}.mu, py::arg("c") = LossWeights{}.c,
      py::arg("dynamic") = true);
  m.def(
      "total_generator_loss",
      [](double content, double adversarial, double dp, double lambda_content, double eta_adversarial,
         double gamma_dp) {
        return total_generator_loss(content, adversarial, dp,
                                    weights(0.5, 1e-12, lambda_content, eta_adversarial, gamma_dp));
      },
      py::arg("content"), py::arg("adversarial"), py::arg("dp"), py::arg("lambda_content") = 1e-2,
      py::arg("eta_adversarial") = 5e-3, py::arg("gamma_dp") = 1.0);
  m.def("schedule_lr", py::overload_cast<int64_t, double, const std::vector<int64_t>&>(&schedule_lr),
        py::arg("iteration"), py::arg("base_lr") = 1e-4,
        py::arg("milestones") = std::vector<int64_t>{50000, 100000, 200000, 300000});

  m.def(
      "feature_shape",
      [](const std::string& tap, int64_t height, int64_t width) {
        const auto s = trace_feature_shape(FeatureTap::parse(tap), height, width);
        return py::make_tuple(s.channels, s.height, s.width);
      },
      py::arg("tap"), py::arg("height"), py::arg("width"),
      "(channels, height, width) of the named tap for an input of the given size.");
  m.def("minimum_input_size", [](const std::string& tap) { return minimum_input_size(FeatureTap::parse(tap)); });
  m.def("canonical_tap_name", [](const std::string& tap) { return FeatureTap::parse(tap).name(); });

  m.def("rgb_to_y", [](const FloatArray& rgb) { return from_plane(rgb_to_y(to_image(rgb))); },
        "BT.601 luma of a (3, H, W) image in [0, 1], returned in [0, 1].");
  m.def("crop_border", [](const DoubleArray& p, int64_t pixels) { return from_plane(crop_border(to_plane(p), pixels)); });
  m.def("psnr", [](const DoubleArray& a, const DoubleArray& b) { return psnr(to_plane(a), to_plane(b)); });
  m.def("ssim", [](const DoubleArray& a, const DoubleArray& b) { return ssim(to_plane(a), to_plane(b)); });
  m.def(
      "evaluate",
      [](const FloatArray& sr, const FloatArray& hr, int64_t border, bool y_channel) {
        EvalOptions opt;
        opt.border = border;
        opt.y_channel = y_channel;
        const auto r = evaluate_pairs({{"image", to_image(sr), to_image(hr)}}, opt);
        return py::make_tuple(r.rows[0].psnr_db, r.rows[0].ssim);
      },
      py::arg("sr"), py::arg("hr"), py::arg("border") = 4, py::arg("y_channel") = true,
      "(PSNR, SSIM) of one super-resolved image against its reference.");

  m.def(
      "make_toy_images",
      [](int count, int64_t size, uint64_t seed) {
        py::list out;
        for (const auto& [name, img] : make_toy_images(count, size, seed)) out.append(py::make_tuple(name, from_image(img)));
        return out;
      },
      py::arg("count") = 16, py::arg("size") = 64, py::arg("seed") = 0);
  m.def("read_png", [](const std::string& path) { return from_image(read_png(path)); });
  m.def("write_png", [](const std::string& path, const FloatArray& img) { write_png(path, to_image(img)); });

  m.def("toy_config_json", [] { return to_json(TrainConfig::toy()).dump(); });
  m.def("validate_config_json", [](const std::string& text) {
    return to_json(train_config_from_json(nlohmann::json::parse(text))).dump();
  });
}
