#ifndef GANSR_DISCRIMINATOR_HPP
#define GANSR_DISCRIMINATOR_HPP

#include <torch/torch.h>

#include <cstdint>

#include "gansr/config.hpp"

namespace gansr {

// Adversarial critic. All three variants consume (batch, bands, h, w) HR
// images and emit raw logits:
//   standard  -> (batch, 1)             VGG-ish conv stack + pooled MLP head
//   patchgan  -> (batch, 1, gh, gw)     fully convolutional patch grid
//   esrgan    -> (batch, 1)             deeper paired-conv VGG-style stack
struct CriticImpl : torch::nn::Module {
  CriticImpl(DiscriminatorConfig cfg, int in_bands);

  torch::Tensor forward(const torch::Tensor& x);

  const DiscriminatorConfig& config() const { return cfg_; }

  DiscriminatorConfig cfg_;
  int in_bands_;
  torch::nn::Sequential features{nullptr};  // conv trunk (all variants)
  torch::nn::Sequential classifier{nullptr};  // pooled MLP head (non-patch)
};
TORCH_MODULE(Critic);

Critic build_critic(const DiscriminatorConfig& cfg, int in_bands);

// Closed-form output extent of the patchgan grid along one axis for an
// input of `extent` pixels at depth `n_blocks` (k=4 convs: first and the
// middle blocks stride 2, the last block and the 1-channel head stride 1).
std::int64_t patchgan_output_extent(std::int64_t extent, int n_blocks);

}  // namespace gansr

#endif  // GANSR_DISCRIMINATOR_HPP
