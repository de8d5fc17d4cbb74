#include "gansr/discriminator.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

namespace gansr {

namespace {

torch::nn::Conv2d conv(int in, int out, int kernel, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                               .stride(stride)
                               .padding((kernel - 1) / 2)
                               .bias(true));
}

torch::nn::LeakyReLU lrelu() {
  return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2));
}

void push_norm(torch::nn::Sequential& seq, NormKind kind, int channels) {
  switch (kind) {
    case NormKind::kBatch:
      seq->push_back(torch::nn::BatchNorm2d(channels));
      break;
    case NormKind::kInstance:
      seq->push_back(torch::nn::InstanceNorm2d(
          torch::nn::InstanceNorm2dOptions(channels).affine(true)));
      break;
    case NormKind::kNone:
      break;
  }
}

std::int64_t conv_extent(std::int64_t n, int kernel, int stride, int pad) {
  return (n + 2 * pad - kernel) / stride + 1;
}

}  // namespace

std::int64_t patchgan_output_extent(std::int64_t extent, int n_blocks) {
  std::int64_t n = extent;
  n = conv_extent(n, 4, 2, 1);  // first block, no norm
  for (int i = 0; i < n_blocks - 2; ++i) {
    n = conv_extent(n, 4, 2, 1);  // strided middle blocks
  }
  n = conv_extent(n, 4, 1, 1);  // final stride-1 block
  n = conv_extent(n, 4, 1, 1);  // 1-channel head
  return n;
}

CriticImpl::CriticImpl(DiscriminatorConfig cfg, int in_bands)
    : cfg_(std::move(cfg)), in_bands_(in_bands) {
  if (in_bands_ < 1) {
    throw std::invalid_argument("critic: in_bands must be >= 1");
  }
  const int b = cfg_.base_channels;
  features = register_module("features", torch::nn::Sequential());

  switch (cfg_.disc_type) {
    case DiscType::kStandard: {
      // Eight 3x3 convs, channels b -> 8b, alternating stride 1/2.
      // Instance norm everywhere except the very first conv.
      const int widths[8] = {b, b, 2 * b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b};
      int prev = in_bands_;
      for (int i = 0; i < 8; ++i) {
        const int stride = (i % 2 == 0) ? 1 : 2;
        features->push_back(conv(prev, widths[i], 3, stride));
        if (i > 0) {
          push_norm(features, NormKind::kInstance, widths[i]);
        }
        features->push_back(lrelu());
        prev = widths[i];
      }
      classifier = register_module("classifier", torch::nn::Sequential());
      classifier->push_back(torch::nn::AdaptiveAvgPool2d(
          torch::nn::AdaptiveAvgPool2dOptions({6, 6})));
      classifier->push_back(torch::nn::Flatten());
      classifier->push_back(
          torch::nn::Linear(8 * b * 6 * 6, cfg_.linear_size.value_or(1024)));
      classifier->push_back(lrelu());
      classifier->push_back(torch::nn::Linear(cfg_.linear_size.value_or(1024), 1));
      break;
    }
    case DiscType::kPatchGan: {
      const int n_blocks = cfg_.n_blocks.value_or(4);
      const NormKind norm = cfg_.norm.value_or(NormKind::kInstance);
      // First block: stride 2, never normalized.
      int prev = in_bands_;
      int width = b;
      features->push_back(conv(prev, width, 4, 2));
      features->push_back(lrelu());
      prev = width;
      // Middle blocks: stride 2, normalized, width doubling capped at 8b.
      for (int i = 1; i < n_blocks - 1; ++i) {
        width = b * std::min(1 << i, 8);
        features->push_back(conv(prev, width, 4, 2));
        push_norm(features, norm, width);
        features->push_back(lrelu());
        prev = width;
      }
      // Final block: stride 1, normalized.
      width = b * std::min(1 << (n_blocks - 1), 8);
      features->push_back(conv(prev, width, 4, 1));
      push_norm(features, norm, width);
      features->push_back(lrelu());
      // 1-channel logit head, stride 1.
      features->push_back(conv(width, 1, 4, 1));
      break;
    }
    case DiscType::kEsrgan: {
      // VGG-style pairs: 3x3 stride-1 conv then 4x4 stride-2 conv, both
      // instance-normalized except the very first conv.
      const int widths[5] = {b, 2 * b, 4 * b, 8 * b, 8 * b};
      int prev = in_bands_;
      for (int i = 0; i < 5; ++i) {
        features->push_back(conv(prev, widths[i], 3, 1));
        if (i > 0) {
          push_norm(features, NormKind::kInstance, widths[i]);
        }
        features->push_back(lrelu());
        features->push_back(conv(widths[i], widths[i], 4, 2));
        push_norm(features, NormKind::kInstance, widths[i]);
        features->push_back(lrelu());
        prev = widths[i];
      }
      classifier = register_module("classifier", torch::nn::Sequential());
      classifier->push_back(torch::nn::AdaptiveAvgPool2d(
          torch::nn::AdaptiveAvgPool2dOptions({4, 4})));
      classifier->push_back(torch::nn::Flatten());
      classifier->push_back(
          torch::nn::Linear(8 * b * 4 * 4, cfg_.linear_size.value_or(1024)));
      classifier->push_back(lrelu());
      classifier->push_back(torch::nn::Linear(cfg_.linear_size.value_or(1024), 1));
      break;
    }
  }
}

torch::Tensor CriticImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4) {
    throw std::invalid_argument(
        "critic: input must be a 4-d (batch, bands, h, w) tensor, got " +
        std::to_string(x.dim()) + "-d");
  }
  if (x.size(1) != in_bands_) {
    throw std::invalid_argument("critic: expected " +
                                std::to_string(in_bands_) + " bands, got " +
                                std::to_string(x.size(1)));
  }
  if (cfg_.disc_type == DiscType::kPatchGan) {
    const int n_blocks = cfg_.n_blocks.value_or(4);
    const auto gh = patchgan_output_extent(x.size(2), n_blocks);
    const auto gw = patchgan_output_extent(x.size(3), n_blocks);
    if (gh < 1 || gw < 1) {
      throw std::invalid_argument(
          "critic: input " + std::to_string(x.size(2)) + "x" +
          std::to_string(x.size(3)) + " is smaller than the minimum size for a " +
          std::to_string(n_blocks) + "-block patchgan critic");
    }
    return features->forward(x);
  }
  auto h = features->forward(x);
  return classifier->forward(h);
}

Critic build_critic(const DiscriminatorConfig& cfg, int in_bands) {
  return Critic(cfg, in_bands);
}

}  // namespace gansr
