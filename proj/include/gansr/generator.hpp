#ifndef GANSR_GENERATOR_HPP
#define GANSR_GENERATOR_HPP

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "gansr/config.hpp"

namespace gansr {

// Common interface for body blocks. Non-stochastic families ignore z.
struct BodyBlockImpl : torch::nn::Module {
  ~BodyBlockImpl() override = default;
  virtual torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) = 0;
};

// Plain residual block without batch normalization (SRResNet style).
struct ResBlockImpl : BodyBlockImpl {
  ResBlockImpl(int channels, double residual_scale);
  torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) override;

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::PReLU act{nullptr};
  double scale;
};
TORCH_MODULE(ResBlock);

// Residual block with channel attention (squeeze -> excite -> rescale).
struct RcabBlockImpl : BodyBlockImpl {
  RcabBlockImpl(int channels, double residual_scale);
  torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) override;

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Conv2d ca_down{nullptr}, ca_up{nullptr};
  torch::nn::PReLU act{nullptr};
  double scale;
};
TORCH_MODULE(RcabBlock);

// Five-conv dense unit used inside RRDB.
struct DenseUnitImpl : torch::nn::Module {
  DenseUnitImpl(int channels, int growth, double residual_scale);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList convs;  // 4 growth convs + fusion conv
  double scale;
};
TORCH_MODULE(DenseUnit);

// Residual-in-residual dense block (three dense units, scaled outer skip).
struct RrdbBlockImpl : BodyBlockImpl {
  RrdbBlockImpl(int channels, int growth, double residual_scale);
  torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) override;

  DenseUnit unit1{nullptr}, unit2{nullptr}, unit3{nullptr};
  double scale;
};
TORCH_MODULE(RrdbBlock);

// Large-kernel-attention block: 5x5 depthwise, 7x7 dilated(3) depthwise,
// 1x1 pointwise gating around a residual projection pair.
struct LkaBlockImpl : BodyBlockImpl {
  LkaBlockImpl(int channels, double residual_scale);
  torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) override;

  torch::nn::Conv2d proj_in{nullptr}, dw{nullptr}, dw_dilated{nullptr},
      pw{nullptr}, proj_out{nullptr};
  double scale;
};
TORCH_MODULE(LkaBlock);

// Residual block whose first conv output is modulated per channel by
// (gamma, beta) projected from a latent code:
//   x_mod = (1 + gamma) * conv1(x) + beta
//   out   = x + conv2(prelu(x_mod)) * s
// The projection MLP's final layer is zero-initialized so training starts
// at the plain-residual identity.
struct NoiseResBlockImpl : BodyBlockImpl {
  NoiseResBlockImpl(int channels, int noise_dim, double residual_scale);
  torch::Tensor run(const torch::Tensor& x, const torch::Tensor& z) override;

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::PReLU act{nullptr};
  torch::nn::Linear mlp_in{nullptr}, mlp_out{nullptr};
  int channels;
  int noise_dim;
  double scale;
};
TORCH_MODULE(NoiseResBlock);

struct GeneratorForward {
  torch::Tensor image;
  torch::Tensor noise;  // defined only when requested on a cgan model
};

// Unified SR generator: wide-kernel head, N body blocks of the configured
// family, tail conv over the globally skipped features, sub-pixel
// upsampler, linear output head. The esrgan type swaps in its dedicated
// wiring (3x3 head, nearest+conv upsampling, hr/last conv pair).
struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(ModelConfig cfg);

  torch::Tensor forward(const torch::Tensor& x);
  GeneratorForward forward_with_noise(const torch::Tensor& x,
                                      std::optional<torch::Tensor> z,
                                      bool return_noise);

  // Standard-normal latent batch (batch_size x noise_dim). cgan only.
  torch::Tensor sample_noise(std::int64_t batch_size,
                             std::optional<std::uint64_t> seed = {}) const;

  const ModelConfig& config() const { return cfg_; }

  ModelConfig cfg_;
  bool dedicated_esrgan_ = false;
  std::vector<std::shared_ptr<BodyBlockImpl>> blocks_;
  torch::nn::ModuleList body{nullptr};

  // shared skeleton
  torch::nn::Conv2d head{nullptr}, tail{nullptr}, output_head{nullptr};
  torch::nn::Sequential upsampler{nullptr};

  // dedicated esrgan wiring
  torch::nn::Conv2d conv_first{nullptr}, conv_body{nullptr}, conv_hr{nullptr},
      conv_last{nullptr};
  torch::nn::ModuleList upconvs{nullptr};

 private:
  torch::Tensor run_body(const torch::Tensor& x, const torch::Tensor& z);
};
TORCH_MODULE(Generator);

// cfg must already be validated; the block family comes from cfg.model_type.
Generator build_generator(const ModelConfig& cfg);

}  // namespace gansr

#endif  // GANSR_GENERATOR_HPP
