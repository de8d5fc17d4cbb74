#ifndef GANSR_LOSSES_HPP
#define GANSR_LOSSES_HPP

#include <torch/torch.h>

#include <optional>

#include "gansr/config.hpp"
#include "gansr/perceptual.hpp"

namespace gansr {

inline constexpr double kSamEps = 1e-8;

// Mean absolute error over all elements. Shapes must match exactly.
torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target);

// Mean spectral angle (radians) between per-pixel band vectors. Requires
// >= 2 bands; the cosine is epsilon-guarded and clamped before acos so the
// loss stays finite and differentiable on (anti-)parallel spectra.
torch::Tensor sam_loss(const torch::Tensor& pred, const torch::Tensor& target);

// Anisotropic total variation: mean absolute difference over all horizontal
// and vertical neighbor pairs. Errors if the image has no neighbor pairs.
torch::Tensor tv_loss(const torch::Tensor& pred);

// Non-saturating generator loss: BCE-with-logits of fake logits against 1.
torch::Tensor adversarial_g_loss(const torch::Tensor& fake_logits);

// Discriminator loss with one-sided label smoothing: real targets are
// 1 - smoothing, fake targets are smoothing. Mean of the two halves.
torch::Tensor adversarial_d_loss(const torch::Tensor& real_logits,
                                 const torch::Tensor& fake_logits,
                                 double smoothing);

struct LossBreakdown {
  torch::Tensor total;    // weighted sum incl. adversarial term (attached)
  torch::Tensor content;  // weighted sum of content terms only (attached)
  // unweighted per-term values, 0 for inactive terms
  double l1 = 0.0;
  double sam = 0.0;
  double perceptual = 0.0;
  double tv = 0.0;
  double adversarial = 0.0;
  double adv_weight = 0.0;  // effective (ramped) weight used for `total`
};

// Builds the composite generator objective. Terms with zero weight are
// skipped entirely (no graph nodes) and reported as 0. The adversarial term
// is active only when `adv_weight > 0` and fake logits are supplied; a
// perceptual backend is required whenever w_perceptual > 0.
LossBreakdown compose_g_objective(
    const torch::Tensor& pred, const torch::Tensor& target,
    const std::optional<torch::Tensor>& fake_logits, const LossConfig& weights,
    double adv_weight, PerceptualBackend* perceptual = nullptr);

}  // namespace gansr

#endif  // GANSR_LOSSES_HPP
