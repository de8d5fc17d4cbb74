#ifndef GANSR_PERCEPTUAL_HPP
#define GANSR_PERCEPTUAL_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gansr/config.hpp"

namespace gansr {

// Deep-feature distance between image pairs. Multiband inputs are mapped to
// the three pretrained-RGB channels via the configured band triplet
// (red, green, blue indices); single-band inputs are replicated.
//
//   vgg19 : L1 between conv5_4 pre-activation feature maps (ImageNet norm)
//   lpips : unit-normalized VGG16 features at five depths, squared
//           differences reweighted by learned 1x1 kernels, spatially averaged
class PerceptualBackend {
 public:
  virtual ~PerceptualBackend() = default;

  // pred/target: (batch, bands, h, w) in [0, 1]. Returns a scalar tensor
  // attached to the autograd graph of `pred`.
  virtual torch::Tensor distance(const torch::Tensor& pred,
                                 const torch::Tensor& target) = 0;

  PerceptualKind kind() const { return kind_; }

  // Loads weights from the tensor-container file at `weights_path` written
  // by tools/export_perceptual.py. A missing or malformed file raises a
  // std::runtime_error that names the path and the export command.
  static std::unique_ptr<PerceptualBackend> load(
      PerceptualKind kind, const std::string& weights_path,
      std::array<int, 3> rgb_triplet);

 protected:
  explicit PerceptualBackend(PerceptualKind kind) : kind_(kind) {}
  PerceptualKind kind_;
};

// Names and shapes of every tensor the weight container must hold for the
// given backend, in canonical order. This is the file-format contract shared
// by the loader, the export script, and the test fixtures.
std::vector<std::pair<std::string, std::vector<std::int64_t>>>
perceptual_weight_schema(PerceptualKind kind);

}  // namespace gansr

#endif  // GANSR_PERCEPTUAL_HPP
