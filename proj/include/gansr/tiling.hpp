#ifndef GANSR_TILING_HPP
#define GANSR_TILING_HPP

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gansr/config.hpp"
#include "gansr/generator.hpp"

namespace gansr {

enum class BlendProfile { kLinear, kCosine };

struct TileWindow {
  std::int64_t row = 0;
  std::int64_t col = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
};

// Overlapping decomposition of an (h, w) raster in LR pixel space. Edge
// windows are shifted inward (never padded), and per-window blend weights
// are normalized so that at every pixel the covering weights sum to 1.
class TileGrid {
 public:
  std::int64_t raster_h = 0, raster_w = 0;
  int tile_size = 0, overlap = 0;
  BlendProfile profile = BlendProfile::kLinear;

  std::vector<std::int64_t> row_starts, col_starts;
  // normalized per-window 1-D weight profiles, double precision
  std::vector<std::vector<double>> row_weights, col_weights;

  std::size_t num_windows() const {
    return row_starts.size() * col_starts.size();
  }
  TileWindow window(std::size_t idx) const;
  // (tile, tile) float32 separable blend weight for window idx, LR space
  torch::Tensor weight_lr(std::size_t idx) const;
  // same weight expanded to HR space (each LR weight repeated scale times)
  torch::Tensor weight_hr(std::size_t idx, int scale) const;
};

// pre: tile_size > 2*overlap, raster at least one tile in each dim.
TileGrid plan_tiles(std::int64_t raster_h, std::int64_t raster_w, int tile_size,
                    int overlap, BlendProfile profile = BlendProfile::kLinear);

// In-memory tiled application: runs `net` on every window of the normalized
// LR tensor (bands, h, w) and blends into (bands, h*scale, w*scale).
// cgan nets receive the same latent for every tile.
torch::Tensor sr_tiled(Generator& net, const torch::Tensor& lr_norm,
                       const TileGrid& grid, int scale,
                       const std::optional<torch::Tensor>& latent = {});

struct InferOptions {
  int tile_size = 512;   // LR pixels
  int overlap = 32;      // LR pixels
  BlendProfile profile = BlendProfile::kLinear;
  bool float32_output = false;  // default: input pixel type, denormalized
  bool deflate = false;
  std::optional<std::uint64_t> latent_seed;  // cgan scene latent
};

// Reads a GeoTIFF scene, applies the generator tile-by-tile, and writes the
// super-resolved GeoTIFF with pixel size divided by the model scale. Output
// rows are written incrementally (memory bounded by one tile-row band).
// Throws on band mismatch; cleans up the partial output file on failure.
void infer_scene(Generator& net, const Config& cfg, const std::string& in_path,
                 const std::string& out_path, const InferOptions& opts);

}  // namespace gansr

#endif  // GANSR_TILING_HPP
