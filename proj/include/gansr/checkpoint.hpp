#ifndef GANSR_CHECKPOINT_HPP
#define GANSR_CHECKPOINT_HPP

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace gansr {

// Flat container of named tensors plus a JSON meta block. Used for model
// checkpoints and perceptual-backend weight files. Layout: magic, version,
// JSON header (names/dtypes/shapes/offsets + meta), raw little-endian data.
struct TensorFile {
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
  // Throws std::runtime_error when the name is absent.
  torch::Tensor require(const std::string& name) const;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

// Parameters and buffers of a module as detached CPU clones, keyed by the
// module's hierarchical names.
std::vector<std::pair<std::string, torch::Tensor>> named_state(
    const torch::nn::Module& m);

// Copies tensors into the module by name. Every module tensor must be
// present with a matching shape; extras under the given prefix are errors.
void load_named_state(torch::nn::Module& m,
                      const std::vector<std::pair<std::string, torch::Tensor>>& state);

}  // namespace gansr

#endif  // GANSR_CHECKPOINT_HPP
