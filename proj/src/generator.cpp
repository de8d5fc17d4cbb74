#include "gansr/generator.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace gansr {

namespace {

torch::nn::Conv2d make_conv(int in, int out, int kernel, int stride = 1,
                            int dilation = 1, int groups = 1) {
  const int pad = dilation * (kernel - 1) / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                               .stride(stride)
                               .padding(pad)
                               .dilation(dilation)
                               .groups(groups)
                               .bias(true));
}

int upsample_stages(int scale) {
  switch (scale) {
    case 2:
      return 1;
    case 4:
      return 2;
    case 8:
      return 3;
    default:
      throw std::invalid_argument("generator: unsupported scale " +
                                  std::to_string(scale));
  }
}

}  // namespace

// ---------------------------------------------------------------- ResBlock

ResBlockImpl::ResBlockImpl(int channels, double residual_scale)
    : scale(residual_scale) {
  conv1 = register_module("conv1", make_conv(channels, channels, 3));
  conv2 = register_module("conv2", make_conv(channels, channels, 3));
  act = register_module("act", torch::nn::PReLU());
}

torch::Tensor ResBlockImpl::run(const torch::Tensor& x,
                                const torch::Tensor& /*z*/) {
  return x + conv2(act(conv1(x))) * scale;
}

// --------------------------------------------------------------- RcabBlock

RcabBlockImpl::RcabBlockImpl(int channels, double residual_scale)
    : scale(residual_scale) {
  conv1 = register_module("conv1", make_conv(channels, channels, 3));
  conv2 = register_module("conv2", make_conv(channels, channels, 3));
  const int squeezed = std::max(channels / 16, 4);
  ca_down = register_module("ca_down", make_conv(channels, squeezed, 1));
  ca_up = register_module("ca_up", make_conv(squeezed, channels, 1));
  act = register_module("act", torch::nn::PReLU());
}

torch::Tensor RcabBlockImpl::run(const torch::Tensor& x,
                                 const torch::Tensor& /*z*/) {
  auto f = conv2(act(conv1(x)));
  auto w = torch::adaptive_avg_pool2d(f, {1, 1});
  w = torch::sigmoid(ca_up(torch::relu(ca_down(w))));
  return x + f * w * scale;
}

// --------------------------------------------------------------- DenseUnit

DenseUnitImpl::DenseUnitImpl(int channels, int growth, double residual_scale)
    : scale(residual_scale) {
  convs = register_module("convs", torch::nn::ModuleList());
  for (int i = 0; i < 4; ++i) {
    convs->push_back(make_conv(channels + i * growth, growth, 3));
  }
  convs->push_back(make_conv(channels + 4 * growth, channels, 3));
}

torch::Tensor DenseUnitImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> feats{x};
  for (int i = 0; i < 4; ++i) {
    auto out = convs->at<torch::nn::Conv2dImpl>(static_cast<size_t>(i))
                   .forward(torch::cat(feats, 1));
    feats.push_back(torch::leaky_relu(out, 0.2));
  }
  auto fused = convs->at<torch::nn::Conv2dImpl>(4).forward(torch::cat(feats, 1));
  return x + fused * scale;
}

// --------------------------------------------------------------- RrdbBlock

RrdbBlockImpl::RrdbBlockImpl(int channels, int growth, double residual_scale)
    : scale(residual_scale) {
  unit1 = register_module("unit1", DenseUnit(channels, growth, residual_scale));
  unit2 = register_module("unit2", DenseUnit(channels, growth, residual_scale));
  unit3 = register_module("unit3", DenseUnit(channels, growth, residual_scale));
}

torch::Tensor RrdbBlockImpl::run(const torch::Tensor& x,
                                 const torch::Tensor& /*z*/) {
  auto h = unit3(unit2(unit1(x)));
  return x + h * scale;
}

// ---------------------------------------------------------------- LkaBlock

LkaBlockImpl::LkaBlockImpl(int channels, double residual_scale)
    : scale(residual_scale) {
  proj_in = register_module("proj_in", make_conv(channels, channels, 1));
  dw = register_module("dw", make_conv(channels, channels, 5, 1, 1, channels));
  dw_dilated = register_module("dw_dilated",
                               make_conv(channels, channels, 7, 1, 3, channels));
  pw = register_module("pw", make_conv(channels, channels, 1));
  proj_out = register_module("proj_out", make_conv(channels, channels, 1));
}

torch::Tensor LkaBlockImpl::run(const torch::Tensor& x,
                                const torch::Tensor& /*z*/) {
  auto u = torch::gelu(proj_in(x));
  auto attn = pw(dw_dilated(dw(u)));
  return x + proj_out(u * attn) * scale;
}

// ----------------------------------------------------------- NoiseResBlock

NoiseResBlockImpl::NoiseResBlockImpl(int channels_in, int noise_dim_in,
                                     double residual_scale)
    : channels(channels_in), noise_dim(noise_dim_in), scale(residual_scale) {
  conv1 = register_module("conv1", make_conv(channels, channels, 3));
  conv2 = register_module("conv2", make_conv(channels, channels, 3));
  act = register_module("act", torch::nn::PReLU());
  mlp_in = register_module("mlp_in", torch::nn::Linear(noise_dim, noise_dim));
  mlp_out = register_module("mlp_out",
                            torch::nn::Linear(noise_dim, 2 * channels));
  // Zero-init the projection head: gamma = beta = 0 at start, so the block
  // behaves exactly like a plain residual block until training moves it.
  torch::NoGradGuard ng;
  mlp_out->weight.zero_();
  mlp_out->bias.zero_();
}

torch::Tensor NoiseResBlockImpl::run(const torch::Tensor& x,
                                     const torch::Tensor& z) {
  if (!z.defined()) {
    throw std::invalid_argument(
        "NoiseResBlock: latent z is required for cgan models");
  }
  if (z.dim() != 2 || z.size(0) != x.size(0) || z.size(1) != noise_dim) {
    throw std::invalid_argument(
        "NoiseResBlock: latent must have shape (batch, " +
        std::to_string(noise_dim) + "), got " +
        std::to_string(z.dim()) + "-d tensor");
  }
  auto gamma_beta = mlp_out(torch::relu(mlp_in(z)));  // (B, 2C)
  auto gamma = gamma_beta.narrow(1, 0, channels).unsqueeze(-1).unsqueeze(-1);
  auto beta =
      gamma_beta.narrow(1, channels, channels).unsqueeze(-1).unsqueeze(-1);
  auto x_mod = (1.0 + gamma) * conv1(x) + beta;
  return x + conv2(act(x_mod)) * scale;
}

// --------------------------------------------------------------- Generator

GeneratorImpl::GeneratorImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  const int c = cfg_.n_channels;
  const int bands_in = cfg_.in_bands;
  const int bands_out = cfg_.out_bands;
  const int stages = upsample_stages(cfg_.scale);
  dedicated_esrgan_ = cfg_.model_type == ModelType::kEsrgan;

  body = register_module("body", torch::nn::ModuleList());
  const int growth = cfg_.growth_channels.value_or(32);
  const int noise_dim = cfg_.noise_dim.value_or(64);
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    std::shared_ptr<BodyBlockImpl> block;
    switch (cfg_.model_type) {
      case ModelType::kRes:
        block = std::make_shared<ResBlockImpl>(c, cfg_.residual_scale);
        break;
      case ModelType::kRcab:
        block = std::make_shared<RcabBlockImpl>(c, cfg_.residual_scale);
        break;
      case ModelType::kRrdb:
      case ModelType::kEsrgan:
        block = std::make_shared<RrdbBlockImpl>(c, growth, cfg_.residual_scale);
        break;
      case ModelType::kLka:
        block = std::make_shared<LkaBlockImpl>(c, cfg_.residual_scale);
        break;
      case ModelType::kCgan:
        block =
            std::make_shared<NoiseResBlockImpl>(c, noise_dim, cfg_.residual_scale);
        break;
    }
    blocks_.push_back(block);
    body->push_back(std::shared_ptr<torch::nn::Module>(block));
  }

  if (dedicated_esrgan_) {
    conv_first = register_module("conv_first", make_conv(bands_in, c, 3));
    conv_body = register_module("conv_body", make_conv(c, c, 3));
    upconvs = register_module("upconvs", torch::nn::ModuleList());
    for (int s = 0; s < stages; ++s) {
      upconvs->push_back(make_conv(c, c, 3));
    }
    conv_hr = register_module("conv_hr", make_conv(c, c, 3));
    conv_last = register_module("conv_last", make_conv(c, bands_out, 3));
  } else {
    head = register_module("head", make_conv(bands_in, c, 9));
    tail = register_module("tail", make_conv(c, c, 3));
    upsampler = register_module("upsampler", torch::nn::Sequential());
    for (int s = 0; s < stages; ++s) {
      upsampler->push_back(make_conv(c, 4 * c, 3));
      upsampler->push_back(torch::nn::PixelShuffle(
          torch::nn::PixelShuffleOptions(2)));
      upsampler->push_back(torch::nn::PReLU());
    }
    output_head = register_module("output_head", make_conv(c, bands_out, 3));
  }
}

torch::Tensor GeneratorImpl::run_body(const torch::Tensor& x,
                                      const torch::Tensor& z) {
  auto h = x;
  for (auto& block : blocks_) {
    h = block->run(h, z);
  }
  return h;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  return forward_with_noise(x, std::nullopt, false).image;
}

GeneratorForward GeneratorImpl::forward_with_noise(
    const torch::Tensor& x, std::optional<torch::Tensor> z, bool return_noise) {
  if (x.dim() != 4) {
    throw std::invalid_argument(
        "generator: input must be a 4-d (batch, bands, h, w) tensor, got " +
        std::to_string(x.dim()) + "-d");
  }
  if (x.size(1) != cfg_.in_bands) {
    throw std::invalid_argument(
        "generator: expected " + std::to_string(cfg_.in_bands) +
        " input bands, got " + std::to_string(x.size(1)));
  }
  const bool is_cgan = cfg_.model_type == ModelType::kCgan;
  if (z.has_value() && !is_cgan) {
    throw std::invalid_argument(
        "generator: latent z supplied but model_type is not cgan");
  }

  GeneratorForward out;
  torch::Tensor latent;
  if (is_cgan) {
    latent = z.has_value() ? *z : sample_noise(x.size(0));
    if (return_noise) {
      out.noise = latent;
    }
  }

  if (dedicated_esrgan_) {
    auto feat = conv_first(x);
    auto h = feat + conv_body(run_body(feat, latent));
    for (size_t s = 0; s < upconvs->size(); ++s) {
      h = torch::nn::functional::interpolate(
          h, torch::nn::functional::InterpolateFuncOptions()
                 .scale_factor(std::vector<double>{2.0, 2.0})
                 .mode(torch::kNearest));
      h = torch::leaky_relu(upconvs->at<torch::nn::Conv2dImpl>(s).forward(h),
                            0.2);
    }
    out.image = conv_last(torch::leaky_relu(conv_hr(h), 0.2));
  } else {
    auto feat = head(x);
    auto h = feat + tail(run_body(feat, latent));
    h = upsampler->forward(h);
    out.image = output_head(h);
  }
  return out;
}

torch::Tensor GeneratorImpl::sample_noise(
    std::int64_t batch_size, std::optional<std::uint64_t> seed) const {
  if (cfg_.model_type != ModelType::kCgan) {
    throw std::invalid_argument(
        "generator: sample_noise is only available for cgan models");
  }
  const auto dim = static_cast<std::int64_t>(cfg_.noise_dim.value_or(64));
  if (seed.has_value()) {
    auto gen = at::detail::createCPUGenerator(*seed);
    return torch::randn({batch_size, dim}, gen,
                        torch::TensorOptions().dtype(torch::kFloat32));
  }
  return torch::randn({batch_size, dim},
                      torch::TensorOptions().dtype(torch::kFloat32));
}

Generator build_generator(const ModelConfig& cfg) { return Generator(cfg); }

}  // namespace gansr
