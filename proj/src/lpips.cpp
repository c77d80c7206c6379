#include "dpsr/lpips.hpp"

#include <algorithm>
#include <array>

#include "dpsr/errors.hpp"

namespace dpsr {
namespace nn = torch::nn;

namespace {

constexpr std::array<int, 5> kConvsPerBlock = {2, 2, 3, 3, 3};
constexpr std::array<int64_t, 5> kWidths = {64, 128, 256, 512, 512};
// indices of relu1_2, relu2_2, relu3_3, relu4_3, relu5_3 in `features`
constexpr std::array<std::size_t, 5> kTapLayers = {3, 8, 15, 22, 29};

}  // namespace

Vgg16FeaturesImpl::Vgg16FeaturesImpl() {
  features = nn::Sequential();
  int64_t in = 3;
  for (std::size_t block = 0; block < kConvsPerBlock.size(); ++block) {
    for (int conv = 0; conv < kConvsPerBlock[block]; ++conv) {
      features->push_back(nn::Conv2d(nn::Conv2dOptions(in, kWidths[block], 3).padding(1)));
      features->push_back(nn::ReLU());
      in = kWidths[block];
    }
    features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  }
  register_module("features", features);
}

LpipsVgg::LpipsVgg()
    : trunk_(Vgg16Features()),
      shift_(torch::tensor({-0.030f, -0.088f, -0.188f}).view({1, 3, 1, 1})),
      scale_(torch::tensor({0.458f, 0.448f, 0.450f}).view({1, 3, 1, 1})) {}

std::shared_ptr<LpipsVgg> LpipsVgg::load(const std::filesystem::path& weights) {
  return from_archive(Archive::load(weights));
}

std::shared_ptr<LpipsVgg> LpipsVgg::from_archive(const Archive& archive) {
  std::shared_ptr<LpipsVgg> metric(new LpipsVgg());
  restore_module(archive, *metric->trunk_);
  metric->trunk_->eval();
  for (auto& p : metric->trunk_->parameters()) p.set_requires_grad(false);
  for (std::size_t k = 0; k < kWidths.size(); ++k) {
    const auto name = "lin" + std::to_string(k) + ".weight";
    auto w = archive.tensor(name).to(torch::kFloat32);
    if (w.numel() != kWidths[k]) throw LoadError("shape mismatch for parameter '" + name + "'");
    metric->heads_.push_back(w.reshape({1, kWidths[k], 1, 1}).clone());
  }
  return metric;
}

std::vector<torch::Tensor> LpipsVgg::activations(const torch::Tensor& x) const {
  std::vector<torch::Tensor> out;
  auto h = ((x * 2.0 - 1.0) - shift_) / scale_;
  const auto& layers = trunk_->features->children();
  for (std::size_t i = 0; i <= kTapLayers.back(); ++i) {
    if (auto conv = std::dynamic_pointer_cast<nn::Conv2dImpl>(layers[i])) h = conv->forward(h);
    if (auto relu = std::dynamic_pointer_cast<nn::ReLUImpl>(layers[i])) h = relu->forward(h);
    if (auto pool = std::dynamic_pointer_cast<nn::MaxPool2dImpl>(layers[i])) h = pool->forward(h);
    if (std::find(kTapLayers.begin(), kTapLayers.end(), i) != kTapLayers.end()) out.push_back(h);
  }
  return out;
}

torch::Tensor LpipsVgg::distance(const torch::Tensor& a, const torch::Tensor& b) const {
  if (a.dim() != 4 || a.size(1) != 3 || !a.sizes().equals(b.sizes()))
    throw ShapeError("lpips expects two (N,3,H,W) batches of equal shape");
  if (a.size(2) < 16 || a.size(3) < 16) throw ShapeError("lpips needs inputs of at least 16x16");
  torch::NoGradGuard no_grad;
  const auto fa = activations(a.to(torch::kFloat32));
  const auto fb = activations(b.to(torch::kFloat32));
  auto total = torch::zeros({a.size(0)});
  for (std::size_t k = 0; k < fa.size(); ++k) {
    const auto na = fa[k] / (fa[k].pow(2).sum(1, true).sqrt() + 1e-10);
    const auto nb = fb[k] / (fb[k].pow(2).sum(1, true).sqrt() + 1e-10);
    const auto d = ((na - nb).pow(2) * heads_[k]).sum(1);
    total = total + d.mean({1, 2});
  }
  return total;
}

double LpipsVgg::distance(const Image& a, const Image& b) const {
  if (!a.same_shape(b)) throw ShapeError("lpips: image shapes differ");
  return distance(to_tensor(a).unsqueeze(0), to_tensor(b).unsqueeze(0)).item<double>();
}

Archive random_lpips_archive(uint64_t seed) {
  torch::manual_seed(seed);
  Vgg16Features trunk;
  torch::NoGradGuard no_grad;
  for (auto& item : trunk->named_parameters()) {
    if (item.key().ends_with(".weight")) nn::init::kaiming_normal_(item.value(), 0.0, torch::kFanOut, torch::kReLU);
    else item.value().zero_();
  }
  Archive archive;
  store_module(archive, *trunk);
  for (std::size_t k = 0; k < kWidths.size(); ++k)
    archive.put("lin" + std::to_string(k) + ".weight", torch::rand({1, kWidths[k], 1, 1}) / static_cast<double>(kWidths[k]));
  archive.put_text("__meta__", R"({"kind":"lpips-vgg","source":"random","seed":)" + std::to_string(seed) + "}");
  return archive;
}

}  // namespace dpsr
