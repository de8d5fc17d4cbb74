#ifndef GANSR_DATA_HPP
#define GANSR_DATA_HPP

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gansr/config.hpp"

namespace gansr {

// Flux-preserving area-average downsampling by `scale` (mean of each
// scale x scale block, per band). Accepts (bands, h, w) or (batch, bands,
// h, w); dims must divide by scale.
torch::Tensor degrade(const torch::Tensor& hr, int scale);

// Raw pixel values -> [0,1]-ish training space and back.
//   reflectance_scale : v/10000, clipped to [0, max_reflectance], then
//                       affinely mapped to [0,1] (clip is documented lossy)
//   minmax            : (v - min) / (max - min)
//   zscore            : (v - mean) / std
torch::Tensor normalize(const torch::Tensor& raw, const DataConfig& cfg);
torch::Tensor denormalize(const torch::Tensor& norm, const DataConfig& cfg);

struct PairSample {
  torch::Tensor lr;  // (bands, h, w)
  torch::Tensor hr;  // (bands, h*scale, w*scale)
};

struct Batch {
  torch::Tensor lr;  // (batch, bands, h, w)
  torch::Tensor hr;
};

// Scene-backed sample source. All scenes are loaded and normalized once at
// construction (read-only afterwards). Training samples are pure functions
// of (seed, step, slot): random scene, random aligned crop, paired
// augmentation. Validation samples are a fixed non-overlapping grid.
class Dataset {
 public:
  static std::shared_ptr<Dataset> make(const DataConfig& cfg,
                                       const std::string& split,
                                       std::uint64_t seed);

  std::int64_t num_scenes() const { return static_cast<std::int64_t>(hr_.size()); }
  int bands() const { return bands_; }
  int scale() const { return cfg_.scale; }

  PairSample train_sample(std::int64_t step, std::int64_t slot) const;
  Batch train_batch(std::int64_t step, int batch_size) const;
  const std::vector<PairSample>& val_samples() const { return val_; }

  // Nominal steps per epoch (crop draws per pass over all scenes); used to
  // resolve d_holdback_epochs.
  std::int64_t steps_per_epoch(int batch_size) const;

 private:
  Dataset(const DataConfig& cfg, std::string split, std::uint64_t seed);
  void load_synthetic(const std::string& dir);
  void load_paired(const std::string& dir);
  void build_val_grid();

  DataConfig cfg_;
  std::string split_;
  std::uint64_t seed_;
  int bands_ = 0;
  std::vector<torch::Tensor> hr_;        // normalized (bands, H, W)
  std::vector<torch::Tensor> lr_;        // paired mode only
  std::vector<std::string> scene_names_;
  std::vector<PairSample> val_;
};

}  // namespace gansr

#endif  // GANSR_DATA_HPP
