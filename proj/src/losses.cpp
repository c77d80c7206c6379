#include "dpsr/losses.hpp"

#include <cmath>

#include "dpsr/errors.hpp"

namespace dpsr {
namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream msg;
    msg << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw ShapeError(msg.str());
  }
}

void check_scores(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  if (d_real.numel() == 0 || d_fake.numel() == 0) throw ValidationError("relativistic loss: empty score batch");
}

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) throw ValidationError(std::string("total_generator_loss: non-finite ") + term);
}

}  // namespace

void LossWeights::validate() const {
  if (!(mu > 0.0)) throw ConfigError("mu must be positive or infinite, got " + std::to_string(mu));
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("c must be a small positive constant");
  for (double v : {lambda_content, eta_adversarial, gamma_dp})
    if (!std::isfinite(v)) throw ConfigError("loss coefficients must be finite");
}

torch::Tensor content_loss(const torch::Tensor& sr, const torch::Tensor& hr) {
  check_same_shape(sr, hr, "content_loss");
  return (sr - hr).abs().mean();
}

torch::Tensor feature_l1(const FeatureMap& sr_features, const FeatureMap& hr_features) {
  if (!(sr_features.tap == hr_features.tap))
    throw ValidationError("feature loss: taps differ (" + sr_features.tap.name() + " vs " +
                          hr_features.tap.name() + ")");
  check_same_shape(sr_features.data, hr_features.data, "feature loss");
  // mean over C,H,W per image, then over the batch; equal sizes make this the
  // plain mean of all elements
  return (sr_features.data - hr_features.data).abs().mean();
}

torch::Tensor vgg_loss(const FeatureMap& sr_features, const FeatureMap& hr_features) {
  if (sr_features.tap.backbone != BackboneKind::vgg19) throw ValidationError("vgg_loss: expected a VGG19 tap");
  return feature_l1(sr_features, hr_features);
}

torch::Tensor resnet_loss(const FeatureMap& sr_features, const FeatureMap& hr_features) {
  if (sr_features.tap.backbone != BackboneKind::resnet50)
    throw ValidationError("resnet_loss: expected a ResNet50 tap");
  return feature_l1(sr_features, hr_features);
}

double zeta(double l_vgg, double l_res, double c) { return (l_vgg + c) / (l_res + c); }

DpLossBreakdown dp_loss(double l_vgg, double l_res, const LossWeights& weights, ResnetWeighting weighting) {
  weights.validate();
  DpLossBreakdown out;
  out.l_vgg = l_vgg;
  out.l_res = l_res;
  out.zeta = weighting == ResnetWeighting::dynamic ? zeta(l_vgg, l_res, weights.c) : 1.0;
  if (weights.vgg_only()) {
    out.weighted_res_term = 0.0;
    out.l_dp = l_vgg;
  } else {
    out.weighted_res_term = out.zeta / weights.mu * l_res;
    out.l_dp = l_vgg + out.weighted_res_term;
  }
  return out;
}

DpLoss dp_loss(const torch::Tensor& l_vgg, const torch::Tensor& l_res, const LossWeights& weights,
               ResnetWeighting weighting) {
  weights.validate();
  if (l_vgg.numel() != 1 || l_res.numel() != 1) throw ShapeError("dp_loss: expected scalar losses");
  DpLoss out;
  auto& b = out.breakdown;
  b.l_vgg = l_vgg.item<double>();
  b.l_res = l_res.item<double>();
  b.zeta = weighting == ResnetWeighting::dynamic ? zeta(b.l_vgg, b.l_res, weights.c) : 1.0;
  if (weights.vgg_only()) {
    out.value = l_vgg;
    b.weighted_res_term = 0.0;
    b.l_dp = b.l_vgg;
    return out;
  }
  // zeta enters as a plain scalar, so autograd sees a constant coefficient
  const auto weighted = l_res * (b.zeta / weights.mu);
  out.value = l_vgg + weighted;
  b.weighted_res_term = weighted.item<double>();
  b.l_dp = out.value.item<double>();
  return out;
}

torch::Tensor ra_discriminator_output(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  check_scores(d_real, d_fake);
  return torch::sigmoid(d_real - d_fake.mean());
}

torch::Tensor adversarial_loss_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  check_scores(d_real, d_fake);
  const auto real_logits = d_real - d_fake.mean();
  const auto fake_logits = d_fake - d_real.mean();
  const auto real_term = torch::binary_cross_entropy_with_logits(real_logits, torch::ones_like(real_logits));
  const auto fake_term = torch::binary_cross_entropy_with_logits(fake_logits, torch::zeros_like(fake_logits));
  return 0.5 * (real_term + fake_term);
}

torch::Tensor adversarial_loss_generator(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  check_scores(d_real, d_fake);
  const auto real_logits = d_real - d_fake.mean();
  const auto fake_logits = d_fake - d_real.mean();
  const auto real_term = torch::binary_cross_entropy_with_logits(real_logits, torch::zeros_like(real_logits));
  const auto fake_term = torch::binary_cross_entropy_with_logits(fake_logits, torch::ones_like(fake_logits));
  return 0.5 * (real_term + fake_term);
}

torch::Tensor total_generator_loss(const torch::Tensor& content, const torch::Tensor& adversarial,
                                   const torch::Tensor& dp, const LossWeights& weights) {
  check_finite(content.item<double>(), "content term");
  check_finite(adversarial.item<double>(), "adversarial term");
  check_finite(dp.item<double>(), "dp term");
  return weights.lambda_content * content + weights.eta_adversarial * adversarial + weights.gamma_dp * dp;
}

double total_generator_loss(double content, double adversarial, double dp, const LossWeights& weights) {
  check_finite(content, "content term");
  check_finite(adversarial, "adversarial term");
  check_finite(dp, "dp term");
  return weights.lambda_content * content + weights.eta_adversarial * adversarial + weights.gamma_dp * dp;
}

}  // namespace dpsr
