#pragma once

#include <limits>
#include <string>

#include <torch/torch.h>

#include "dpsr/feature_extraction.hpp"

namespace dpsr {

inline constexpr double kInfiniteMu = std::numeric_limits<double>::infinity();

// Coefficients of the generator objective
//   L = lambda * l_content + eta * l_adversarial + gamma * l_dp
// and of the DP loss
//   l_dp = l_vgg + (1/mu) * zeta * l_res,  zeta = value((l_vgg + c) / (l_res + c)).
// mu = +inf drops the ResNet term entirely (VGG-only baseline).
struct LossWeights {
  double lambda_content = 1e-2;
  double eta_adversarial = 5e-3;
  double gamma_dp = 1.0;
  double mu = 0.5;
  double c = 1e-12;

  bool vgg_only() const { return mu == kInfiniteMu; }
  // Throws ConfigError on mu <= 0, c <= 0 or non-finite coefficients.
  void validate() const;
};

// How the ResNet term is weighted.
//   dynamic: zeta recomputed from the current losses every step
//   unit:    zeta fixed at 1, i.e. a static l_vgg + l_res / mu
enum class ResnetWeighting { dynamic, unit };

struct DpLossBreakdown {
  double l_vgg = 0.0;
  double l_res = 0.0;
  double zeta = 1.0;
  double weighted_res_term = 0.0;
  double l_dp = 0.0;

  bool operator==(const DpLossBreakdown&) const = default;
};

// Differentiable DP loss plus the numbers that went into it.
struct DpLoss {
  torch::Tensor value;
  DpLossBreakdown breakdown;
};

// Mean absolute pixel difference.
torch::Tensor content_loss(const torch::Tensor& sr, const torch::Tensor& hr);

// Per-image (1/CHW) * sum |a - b|, averaged over the batch. Both maps must
// come from the same tap and have the same shape.
torch::Tensor feature_l1(const FeatureMap& sr_features, const FeatureMap& hr_features);
torch::Tensor vgg_loss(const FeatureMap& sr_features, const FeatureMap& hr_features);
torch::Tensor resnet_loss(const FeatureMap& sr_features, const FeatureMap& hr_features);

// (l_vgg + c) / (l_res + c). Plain numbers: whatever is built from the
// result carries no gradient back into the two losses.
double zeta(double l_vgg, double l_res, double c);

DpLossBreakdown dp_loss(double l_vgg, double l_res, const LossWeights& weights,
                        ResnetWeighting weighting = ResnetWeighting::dynamic);

// l_vgg and l_res are live scalar tensors; only their values enter zeta,
// so d(l_dp) = d(l_vgg) + (zeta/mu) d(l_res).
DpLoss dp_loss(const torch::Tensor& l_vgg, const torch::Tensor& l_res, const LossWeights& weights,
               ResnetWeighting weighting = ResnetWeighting::dynamic);

// sigmoid(d_real - mean(d_fake)) per element of d_real. Swap the arguments
// for the fake-side counterpart.
torch::Tensor ra_discriminator_output(const torch::Tensor& d_real, const torch::Tensor& d_fake);

// Relativistic-average BCE pair. The discriminator pushes the real-side
// output to 1 and the fake-side output to 0; the generator pushes the
// reverse. Each loss averages its real-side and fake-side terms.
torch::Tensor adversarial_loss_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake);
torch::Tensor adversarial_loss_generator(const torch::Tensor& d_real, const torch::Tensor& d_fake);

// lambda * content + eta * adversarial + gamma * dp. Throws ValidationError
// naming the first non-finite term.
torch::Tensor total_generator_loss(const torch::Tensor& content, const torch::Tensor& adversarial,
                                   const torch::Tensor& dp, const LossWeights& weights);
double total_generator_loss(double content, double adversarial, double dp, const LossWeights& weights);

}  // namespace dpsr
