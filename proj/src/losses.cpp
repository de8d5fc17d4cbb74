#include "gansr/losses.hpp"

#include <stdexcept>
#include <string>

namespace gansr {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b,
                        const char* who) {
  if (!a.sizes().equals(b.sizes())) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                c10::str(a.sizes()) + " vs " +
                                c10::str(b.sizes()));
  }
}

}  // namespace

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  return torch::l1_loss(pred, target);
}

torch::Tensor sam_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "sam_loss");
  if (pred.dim() != 4) {
    throw std::invalid_argument("sam_loss: expected (batch, bands, h, w), got " +
                                std::to_string(pred.dim()) + "-d tensor");
  }
  if (pred.size(1) < 2) {
    throw std::invalid_argument(
        "sam_loss: spectral angle needs at least 2 bands, got " +
        std::to_string(pred.size(1)));
  }
  auto dot = (pred * target).sum(1);
  auto norm_p = pred.pow(2).sum(1).sqrt();
  auto norm_t = target.pow(2).sum(1).sqrt();
  auto cosine = dot / (norm_p * norm_t + kSamEps);
  // clamp strictly inside [-1, 1]: keeps acos finite and its gradient bounded
  cosine = cosine.clamp(-1.0 + 1e-7, 1.0 - 1e-7);
  return torch::acos(cosine).mean();
}

torch::Tensor tv_loss(const torch::Tensor& pred) {
  if (pred.dim() != 4) {
    throw std::invalid_argument("tv_loss: expected (batch, bands, h, w), got " +
                                std::to_string(pred.dim()) + "-d tensor");
  }
  const auto h = pred.size(2);
  const auto w = pred.size(3);
  if (h < 2 && w < 2) {
    throw std::invalid_argument(
        "tv_loss: image has no neighbor pairs (h and w both < 2)");
  }
  auto opts = pred.options();
  auto abs_sum = torch::zeros({}, opts);
  std::int64_t pairs = 0;
  if (w >= 2) {
    auto dx = pred.narrow(3, 1, w - 1) - pred.narrow(3, 0, w - 1);
    abs_sum = abs_sum + dx.abs().sum();
    pairs += dx.numel();
  }
  if (h >= 2) {
    auto dy = pred.narrow(2, 1, h - 1) - pred.narrow(2, 0, h - 1);
    abs_sum = abs_sum + dy.abs().sum();
    pairs += dy.numel();
  }
  return abs_sum / static_cast<double>(pairs);
}

torch::Tensor adversarial_g_loss(const torch::Tensor& fake_logits) {
  return torch::binary_cross_entropy_with_logits(
      fake_logits, torch::ones_like(fake_logits));
}

torch::Tensor adversarial_d_loss(const torch::Tensor& real_logits,
                                 const torch::Tensor& fake_logits,
                                 double smoothing) {
  if (smoothing < 0.0 || smoothing >= 0.5) {
    throw std::invalid_argument("adversarial_d_loss: smoothing must be in [0, 0.5)");
  }
  auto real = torch::binary_cross_entropy_with_logits(
      real_logits, torch::full_like(real_logits, 1.0 - smoothing));
  auto fake = torch::binary_cross_entropy_with_logits(
      fake_logits, torch::full_like(fake_logits, smoothing));
  return 0.5 * (real + fake);
}

LossBreakdown compose_g_objective(const torch::Tensor& pred,
                                  const torch::Tensor& target,
                                  const std::optional<torch::Tensor>& fake_logits,
                                  const LossConfig& weights, double adv_weight,
                                  PerceptualBackend* perceptual) {
  LossBreakdown out;
  out.adv_weight = adv_weight;
  auto content = torch::zeros({}, pred.options());

  if (weights.w_l1 > 0.0) {
    auto term = gansr::l1_loss(pred, target);
    out.l1 = term.item<double>();
    content = content + weights.w_l1 * term;
  }
  if (weights.w_sam > 0.0) {
    auto term = sam_loss(pred, target);
    out.sam = term.item<double>();
    content = content + weights.w_sam * term;
  }
  if (weights.w_perceptual > 0.0) {
    if (perceptual == nullptr) {
      throw std::runtime_error(
          "compose_g_objective: perceptual weight is " +
          std::to_string(weights.w_perceptual) +
          " but no perceptual backend was provided");
    }
    auto term = perceptual->distance(pred, target);
    out.perceptual = term.item<double>();
    content = content + weights.w_perceptual * term;
  }
  if (weights.w_tv > 0.0) {
    auto term = tv_loss(pred);
    out.tv = term.item<double>();
    content = content + weights.w_tv * term;
  }

  out.content = content;
  if (adv_weight > 0.0 && fake_logits.has_value()) {
    auto term = adversarial_g_loss(*fake_logits);
    out.adversarial = term.item<double>();
    out.total = content + adv_weight * term;
  } else {
    out.total = content;
  }
  return out;
}

}  // namespace gansr
