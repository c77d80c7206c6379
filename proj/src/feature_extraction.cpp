#include "dpsr/feature_extraction.hpp"

#include <charconv>
#include <sstream>

#include "dpsr/errors.hpp"

namespace dpsr {
namespace nn = torch::nn;

namespace {

int64_t conv_out(int64_t size, int64_t kernel, int64_t stride, int64_t padding) {
  return (size + 2 * padding - kernel) / stride + 1;
}

std::string valid_ranges(BackboneKind kind) {
  std::ostringstream s;
  if (kind == BackboneKind::vgg19) {
    s << "VGG19 taps: block i in [1,5], conv j in [1,n_i] with n = (2,2,4,4,4)";
  } else {
    s << "ResNet50 taps: stage m in [1,4], bottleneck n in [1,n_m] with n = (3,4,6,3)";
  }
  return s.str();
}

void check_input(const torch::Tensor& images, const FeatureTap& tap, const ExtractOptions& options) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw ShapeError("extract: expected (batch, 3, H, W) images");
  const auto min_size = minimum_input_size(tap);
  if (images.size(2) < min_size || images.size(3) < min_size)
    throw ShapeError("extract: input " + std::to_string(images.size(2)) + "x" + std::to_string(images.size(3)) +
                     " is smaller than the " + std::to_string(min_size) + "x" + std::to_string(min_size) +
                     " minimum for tap " + tap.name());
  if (options.validate_range && images.numel() > 0) {
    torch::NoGradGuard no_grad;
    const double lo = images.min().item<double>();
    const double hi = images.max().item<double>();
    if (lo < -1e-6 || hi > 1.0 + 1e-6) {
      std::ostringstream msg;
      msg << "extract: image values must lie in [0,1], got [" << lo << ", " << hi << "]";
      throw ValidationError(msg.str());
    }
  }
}

}  // namespace

std::string to_string(BackboneKind kind) { return kind == BackboneKind::vgg19 ? "vgg19" : "resnet50"; }

FeatureTap FeatureTap::vgg(int block, int conv, ActivationPoint point) {
  return {BackboneKind::vgg19, block, conv, point};
}

FeatureTap FeatureTap::resnet(int stage, int bottleneck, ActivationPoint point) {
  return {BackboneKind::resnet50, stage, bottleneck, point};
}

FeatureTap FeatureTap::parse(std::string_view text) {
  auto fail = [&] { return ValidationError("cannot parse feature tap '" + std::string(text) + "'"); };
  std::string_view body = text;
  std::optional<ActivationPoint> point;
  if (auto colon = body.find(':'); colon != std::string_view::npos) {
    const auto suffix = body.substr(colon + 1);
    if (suffix == "pre") point = ActivationPoint::before_activation;
    else if (suffix == "post") point = ActivationPoint::after_activation;
    else throw fail();
    body = body.substr(0, colon);
  }
  BackboneKind kind;
  if (body.starts_with("phi_")) {
    kind = BackboneKind::vgg19;
    body.remove_prefix(4);
  } else if (body.starts_with("beta_")) {
    kind = BackboneKind::resnet50;
    body.remove_prefix(5);
  } else {
    throw fail();
  }

  const auto sep = body.find('_');
  if (sep == std::string_view::npos) throw fail();
  int a = 0, b = 0;
  auto first = body.substr(0, sep), second = body.substr(sep + 1);
  if (std::from_chars(first.data(), first.data() + first.size(), a).ec != std::errc{} ||
      std::from_chars(second.data(), second.data() + second.size(), b).ec != std::errc{})
    throw fail();

  FeatureTap tap = kind == BackboneKind::vgg19 ? vgg(a, b) : resnet(a, b);
  if (point) tap.point = *point;
  tap.validate();
  return tap;
}

std::string FeatureTap::name() const {
  const bool vgg_tap = backbone == BackboneKind::vgg19;
  std::string s = (vgg_tap ? "phi_" : "beta_") + std::to_string(index_a) + "_" + std::to_string(index_b);
  const auto conventional = vgg_tap ? ActivationPoint::before_activation : ActivationPoint::after_activation;
  if (point != conventional) s += point == ActivationPoint::before_activation ? ":pre" : ":post";
  return s;
}

void FeatureTap::validate() const {
  bool ok = false;
  if (backbone == BackboneKind::vgg19) {
    ok = index_a >= 1 && index_a <= 5 && index_b >= 1 && index_b <= kVggConvsPerBlock[index_a - 1];
  } else {
    ok = index_a >= 1 && index_a <= 4 && index_b >= 1 && index_b <= kResnetBottlenecksPerStage[index_a - 1];
  }
  if (!ok) throw ValidationError("invalid tap " + name() + "; " + valid_ranges(backbone));
}

int64_t minimum_input_size(const FeatureTap& tap) {
  tap.validate();
  if (tap.backbone == BackboneKind::vgg19) return int64_t{1} << (tap.index_a - 1);
  return int64_t{4} << (tap.index_a - 1);
}

FeatureShape trace_feature_shape(const FeatureTap& tap, int64_t height, int64_t width) {
  const auto min_size = minimum_input_size(tap);
  if (height < min_size || width < min_size)
    throw ShapeError("input too small for tap " + tap.name() + " (minimum " + std::to_string(min_size) + ")");
  int64_t h = height, w = width;
  if (tap.backbone == BackboneKind::vgg19) {
    for (int block = 1; block < tap.index_a; ++block) {
      h = conv_out(h, 2, 2, 0);
      w = conv_out(w, 2, 2, 0);
    }
    return {kVggBlockWidths[tap.index_a - 1], h, w};
  }
  h = conv_out(conv_out(h, 7, 2, 3), 3, 2, 1);
  w = conv_out(conv_out(w, 7, 2, 3), 3, 2, 1);
  for (int stage = 2; stage <= tap.index_a; ++stage) {
    h = conv_out(h, 3, 2, 1);
    w = conv_out(w, 3, 2, 1);
  }
  return {kResnetStageWidths[tap.index_a - 1], h, w};
}

// ---------------------------------------------------------------- VGG19

Vgg19FeaturesImpl::Vgg19FeaturesImpl() {
  features = nn::Sequential();
  int64_t in = 3;
  for (std::size_t block = 0; block < kVggConvsPerBlock.size(); ++block) {
    for (int conv = 0; conv < kVggConvsPerBlock[block]; ++conv) {
      features->push_back(nn::Conv2d(nn::Conv2dOptions(in, kVggBlockWidths[block], 3).padding(1)));
      features->push_back(nn::ReLU());
      in = kVggBlockWidths[block];
    }
    features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  }
  register_module("features", features);
}

torch::Tensor Vgg19FeaturesImpl::forward_to(torch::Tensor x, const FeatureTap& tap) {
  int block = 1, conv = 0;
  const auto& layers = features->children();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto c = std::dynamic_pointer_cast<nn::Conv2dImpl>(layers[i])) {
      ++conv;
      x = c->forward(x);
      const bool at_tap = block == tap.index_a && conv == tap.index_b;
      if (at_tap && tap.point == ActivationPoint::before_activation) return x;
      x = torch::relu(x);
      ++i;  // the ReLU that follows every conv
      if (at_tap) return x;
    } else {
      x = torch::max_pool2d(x, 2, 2);
      ++block;
      conv = 0;
    }
  }
  throw ValidationError("tap " + tap.name() + " not reached");
}

// -------------------------------------------------------------- ResNet50

BottleneckImpl::BottleneckImpl(int64_t in_channels, int64_t width, int64_t stride) {
  const int64_t out_channels = width * 4;
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, width, 1).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(width));
  conv2 = register_module("conv2",
                          nn::Conv2d(nn::Conv2dOptions(width, width, 3).stride(stride).padding(1).bias(false)));
  bn2 = register_module("bn2", nn::BatchNorm2d(width));
  conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(width, out_channels, 1).bias(false)));
  bn3 = register_module("bn3", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample = register_module(
        "downsample", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                                     nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BottleneckImpl::forward_pre_activation(const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = torch::relu(bn2(conv2(out)));
  out = bn3(conv3(out));
  auto identity = downsample ? downsample->forward(x) : x;
  return out + identity;
}

ResNet50TrunkImpl::ResNet50TrunkImpl() {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(64));
  int64_t in = 64;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const int64_t width = kResnetStageWidths[s] / 4;
    stages[s] = nn::Sequential();
    for (int b = 0; b < kResnetBottlenecksPerStage[s]; ++b) {
      const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      stages[s]->push_back(Bottleneck(in, width, stride));
      in = width * 4;
    }
    register_module("layer" + std::to_string(s + 1), stages[s]);
  }
}

torch::Tensor ResNet50TrunkImpl::forward_to(torch::Tensor x, const FeatureTap& tap) {
  x = torch::relu(bn1(conv1(x)));
  x = torch::max_pool2d(x, 3, 2, 1);
  for (int stage = 1; stage <= tap.index_a; ++stage) {
    const auto& blocks = stages[stage - 1]->children();
    const int last = stage == tap.index_a ? tap.index_b : static_cast<int>(blocks.size());
    for (int b = 1; b <= last; ++b) {
      auto block = std::dynamic_pointer_cast<BottleneckImpl>(blocks[b - 1]);
      if (stage == tap.index_a && b == last && tap.point == ActivationPoint::before_activation)
        return block->forward_pre_activation(x);
      x = block->forward(x);
    }
  }
  return x;
}

// ---------------------------------------------------------- backbone

PretrainedBackbone::PretrainedBackbone(BackboneKind kind) : kind_(kind) {
  if (kind == BackboneKind::vgg19) vgg_ = Vgg19Features();
  else resnet_ = ResNet50Trunk();
  mean_ = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  std_ = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
}

torch::nn::Module& PretrainedBackbone::module() const {
  if (kind_ == BackboneKind::vgg19) return *vgg_.ptr();
  return *resnet_.ptr();
}

std::shared_ptr<PretrainedBackbone> PretrainedBackbone::from_archive(BackboneKind kind, const Archive& archive) {
  std::shared_ptr<PretrainedBackbone> backbone(new PretrainedBackbone(kind));
  auto& module = backbone->module();
  restore_module(archive, module);
  module.eval();
  for (auto& p : module.parameters()) p.set_requires_grad(false);
  return backbone;
}

std::shared_ptr<PretrainedBackbone> PretrainedBackbone::load(BackboneKind kind, const std::filesystem::path& weights) {
  if (!std::filesystem::exists(weights))
    throw LoadError(to_string(kind) + " weights not found: " + weights.string());
  try {
    return from_archive(kind, Archive::load(weights));
  } catch (const LoadError& e) {
    throw LoadError(to_string(kind) + " (" + weights.string() + "): " + e.what());
  }
}

std::vector<int> PretrainedBackbone::block_structure() const {
  std::vector<int> out;
  if (kind_ == BackboneKind::vgg19) {
    int count = 0;
    for (const auto& child : vgg_->features->children()) {
      if (std::dynamic_pointer_cast<nn::Conv2dImpl>(child)) ++count;
      if (std::dynamic_pointer_cast<nn::MaxPool2dImpl>(child)) {
        out.push_back(count);
        count = 0;
      }
    }
  } else {
    for (const auto& stage : resnet_->stages) out.push_back(static_cast<int>(stage->size()));
  }
  return out;
}

int64_t PretrainedBackbone::conv_layer_count() const {
  int64_t count = 0;
  for (const auto& m : module().modules(/*include_self=*/false))
    if (std::dynamic_pointer_cast<nn::Conv2dImpl>(m)) ++count;
  return count;
}

std::vector<std::string> PretrainedBackbone::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& item : module().named_parameters()) names.push_back(item.key());
  return names;
}

std::vector<std::pair<std::string, torch::Tensor>> PretrainedBackbone::state() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module().named_parameters()) out.emplace_back(item.key(), item.value());
  for (const auto& item : module().named_buffers()) out.emplace_back(item.key(), item.value());
  return out;
}

torch::Tensor PretrainedBackbone::forward_to(const torch::Tensor& images, const FeatureTap& tap) const {
  if (tap.backbone != kind_) throw ValidationError("tap " + tap.name() + " does not belong to " + to_string(kind_));
  auto x = (images.to(torch::kFloat32) - mean_) / std_;
  if (kind_ == BackboneKind::vgg19) return vgg_.ptr()->forward_to(x, tap);
  return resnet_.ptr()->forward_to(x, tap);
}

// ---------------------------------------------------------- extractor

FeatureExtractor::FeatureExtractor(std::shared_ptr<const PretrainedBackbone> backbone, FeatureTap tap)
    : backbone_(std::move(backbone)), tap_(tap) {
  if (!backbone_) throw ValidationError("truncate: null backbone");
  tap_.validate();
  if (tap_.backbone != backbone_->kind())
    throw ValidationError("tap " + tap_.name() + " does not belong to " + to_string(backbone_->kind()));
}

FeatureMap FeatureExtractor::extract(const torch::Tensor& images, const ExtractOptions& options) const {
  check_input(images, tap_, options);
  return {backbone_->forward_to(images, tap_), tap_};
}

FeatureExtractor truncate(std::shared_ptr<const PretrainedBackbone> backbone, const FeatureTap& tap) {
  return FeatureExtractor(std::move(backbone), tap);
}

// ------------------------------------------------------ surrogate weights

Archive random_backbone_archive(BackboneKind kind, uint64_t seed) {
  torch::manual_seed(seed);
  std::shared_ptr<nn::Module> module;
  if (kind == BackboneKind::vgg19) module = Vgg19Features().ptr();
  else module = ResNet50Trunk().ptr();

  torch::NoGradGuard no_grad;
  for (auto& item : module->named_parameters()) {
    auto& p = item.value();
    const auto& name = item.key();
    if (p.dim() == 4) {
      nn::init::kaiming_normal_(p, 0.0, torch::kFanOut, torch::kReLU);
    } else if (name.ends_with("bias")) {
      p.zero_();
    } else if (name.find("bn3.weight") != std::string::npos) {
      // damp the residual branch so 16 stacked bottlenecks stay well scaled
      p.fill_(0.5);
    } else {
      p.fill_(1.0);
    }
  }
  Archive archive;
  store_module(archive, *module);
  archive.put_text("__meta__", "{\"kind\":\"" + to_string(kind) + "\",\"surrogate\":true,\"seed\":" +
                                   std::to_string(seed) + "}");
  return archive;
}

}  // namespace dpsr
