#include "gansr/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "gansr/data.hpp"
#include "gansr/geotiff.hpp"

namespace gansr {

namespace {

double ramp(std::int64_t j, std::int64_t width, BlendProfile profile) {
  // strictly positive rising ramp over `width` overlap pixels
  const double t = static_cast<double>(j + 1) / static_cast<double>(width + 1);
  if (profile == BlendProfile::kCosine) {
    return 0.5 * (1.0 - std::cos(M_PI * t));
  }
  return t;
}

struct AxisPlan {
  std::vector<std::int64_t> starts;
  std::vector<std::vector<double>> weights;
};

AxisPlan plan_axis(std::int64_t dim, int tile, int overlap,
                   BlendProfile profile) {
  AxisPlan plan;
  if (dim < tile) {
    throw std::invalid_argument("plan_tiles: raster extent " +
                                std::to_string(dim) +
                                " is smaller than the tile size " +
                                std::to_string(tile));
  }
  const std::int64_t stride = tile - overlap;
  plan.starts.push_back(0);
  while (plan.starts.back() + tile < dim) {
    plan.starts.push_back(std::min(plan.starts.back() + stride,
                                   dim - static_cast<std::int64_t>(tile)));
  }
  const std::size_t n = plan.starts.size();

  // raw profiles: ramp in over the actual left overlap, ramp out over the
  // actual right overlap (edge windows keep full weight at the raster edge)
  plan.weights.assign(n, std::vector<double>(static_cast<std::size_t>(tile), 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t start = plan.starts[i];
    const std::int64_t left_ov =
        i == 0 ? 0
               : std::clamp<std::int64_t>(plan.starts[i - 1] + tile - start, 0,
                                          tile);
    const std::int64_t right_ov =
        i + 1 == n ? 0
                   : std::clamp<std::int64_t>(start + tile - plan.starts[i + 1],
                                              0, tile);
    auto& w = plan.weights[i];
    for (std::int64_t j = 0; j < left_ov; ++j) {
      w[static_cast<std::size_t>(j)] *= ramp(j, left_ov, profile);
    }
    for (std::int64_t j = 0; j < right_ov; ++j) {
      w[static_cast<std::size_t>(tile - 1 - j)] *= ramp(j, right_ov, profile);
    }
  }

  // normalize to an exact partition of unity
  std::vector<double> cover(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < tile; ++j) {
      cover[static_cast<std::size_t>(plan.starts[i] + j)] +=
          plan.weights[i][static_cast<std::size_t>(j)];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < tile; ++j) {
      plan.weights[i][static_cast<std::size_t>(j)] /=
          cover[static_cast<std::size_t>(plan.starts[i] + j)];
    }
  }
  return plan;
}

torch::Tensor axis_tensor(const std::vector<double>& w) {
  return torch::tensor(w, torch::kFloat64).to(torch::kFloat32);
}

}  // namespace

TileWindow TileGrid::window(std::size_t idx) const {
  const std::size_t ncols = col_starts.size();
  const std::size_t r = idx / ncols;
  const std::size_t c = idx % ncols;
  return TileWindow{row_starts[r], col_starts[c], tile_size, tile_size};
}

torch::Tensor TileGrid::weight_lr(std::size_t idx) const {
  const std::size_t ncols = col_starts.size();
  auto wy = axis_tensor(row_weights[idx / ncols]);
  auto wx = axis_tensor(col_weights[idx % ncols]);
  return torch::outer(wy, wx);
}

torch::Tensor TileGrid::weight_hr(std::size_t idx, int scale) const {
  auto w = weight_lr(idx);
  return w.repeat_interleave(scale, 0).repeat_interleave(scale, 1);
}

TileGrid plan_tiles(std::int64_t raster_h, std::int64_t raster_w, int tile_size,
                    int overlap, BlendProfile profile) {
  if (overlap < 0) {
    throw std::invalid_argument("plan_tiles: overlap must be >= 0");
  }
  if (tile_size <= 2 * overlap) {
    throw std::invalid_argument("plan_tiles: tile_size (" +
                                std::to_string(tile_size) +
                                ") must exceed 2*overlap (" +
                                std::to_string(2 * overlap) + ")");
  }
  TileGrid g;
  g.raster_h = raster_h;
  g.raster_w = raster_w;
  g.tile_size = tile_size;
  g.overlap = overlap;
  g.profile = profile;
  auto rows = plan_axis(raster_h, tile_size, overlap, profile);
  auto cols = plan_axis(raster_w, tile_size, overlap, profile);
  g.row_starts = std::move(rows.starts);
  g.row_weights = std::move(rows.weights);
  g.col_starts = std::move(cols.starts);
  g.col_weights = std::move(cols.weights);
  return g;
}

torch::Tensor sr_tiled(Generator& net, const torch::Tensor& lr_norm,
                       const TileGrid& grid, int scale,
                       const std::optional<torch::Tensor>& latent) {
  if (lr_norm.dim() != 3) {
    throw std::invalid_argument("sr_tiled: expected (bands, h, w) input");
  }
  torch::NoGradGuard ng;
  const auto bands = net->config().out_bands;
  auto acc = torch::zeros({bands, lr_norm.size(1) * scale,
                           lr_norm.size(2) * scale},
                          torch::kFloat32);
  for (std::size_t i = 0; i < grid.num_windows(); ++i) {
    const auto win = grid.window(i);
    auto tile = lr_norm.narrow(1, win.row, win.h).narrow(2, win.col, win.w);
    auto sr = net->forward_with_noise(tile.unsqueeze(0), latent, false)
                  .image.squeeze(0);
    auto w = grid.weight_hr(i, scale).unsqueeze(0);
    acc.narrow(1, win.row * scale, win.h * scale)
        .narrow(2, win.col * scale, win.w * scale)
        .add_(sr * w);
  }
  return acc;
}

void infer_scene(Generator& net, const Config& cfg, const std::string& in_path,
                 const std::string& out_path, const InferOptions& opts) {
  auto scene = read_geotiff(in_path);
  const int scale = cfg.model.scale;
  if (scene.data.size(0) != cfg.model.in_bands) {
    throw std::runtime_error(
        "infer: " + in_path + " has " + std::to_string(scene.data.size(0)) +
        " bands, the model expects " + std::to_string(cfg.model.in_bands));
  }
  const auto h = scene.data.size(1);
  const auto w = scene.data.size(2);

  // shrink the tile to the raster when the scene is smaller than one tile
  int tile = static_cast<int>(
      std::min<std::int64_t>(opts.tile_size, std::min(h, w)));
  int overlap = std::min(opts.overlap, (tile - 1) / 2);
  auto grid = plan_tiles(h, w, tile, overlap, opts.profile);

  auto lr_norm = normalize(scene.data, cfg.data).to(torch::kFloat32);

  std::optional<torch::Tensor> latent;
  if (cfg.model.model_type == ModelType::kCgan) {
    // one latent per scene keeps adjoining tiles statistically consistent
    latent = net->sample_noise(1, opts.latent_seed.value_or(cfg.train.seed));
  }

  GeoMeta out_geo = scene.geo;
  if (out_geo.has_pixel_scale) {
    out_geo.pixel_scale[0] /= scale;
    out_geo.pixel_scale[1] /= scale;
  }
  const PixelType out_type =
      opts.float32_output ? PixelType::kFloat32 : scene.pixel_type;

  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard ng;

  GeoTiffRowWriter writer(out_path, cfg.model.out_bands, h * scale, w * scale,
                          out_type, out_geo, opts.deflate);
  try {
    // process one row band at a time; carry unfinished overlap rows forward
    const auto n_row_bands = grid.row_starts.size();
    const auto n_cols = grid.col_starts.size();
    std::int64_t span_lo = 0;  // first un-flushed HR row
    torch::Tensor acc;         // (bands, span, w*scale) accumulator

    for (std::size_t ri = 0; ri < n_row_bands; ++ri) {
      const auto band_lo = grid.row_starts[ri] * scale;
      const auto band_hi = band_lo + static_cast<std::int64_t>(tile) * scale;
      // widen the accumulator to cover [span_lo, band_hi)
      const auto span = band_hi - span_lo;
      if (!acc.defined()) {
        acc = torch::zeros({cfg.model.out_bands, span, w * scale},
                           torch::kFloat32);
      } else if (acc.size(1) < span) {
        auto grown = torch::zeros({cfg.model.out_bands, span, w * scale},
                                  torch::kFloat32);
        grown.narrow(1, 0, acc.size(1)).copy_(acc);
        acc = grown;
      }
      for (std::size_t ci = 0; ci < n_cols; ++ci) {
        const auto idx = ri * n_cols + ci;
        const auto win = grid.window(idx);
        auto tile_in =
            lr_norm.narrow(1, win.row, win.h).narrow(2, win.col, win.w);
        auto sr = net->forward_with_noise(tile_in.unsqueeze(0), latent, false)
                      .image.squeeze(0);
        auto wgt = grid.weight_hr(idx, scale).unsqueeze(0);
        acc.narrow(1, win.row * scale - span_lo, win.h * scale)
            .narrow(2, win.col * scale, win.w * scale)
            .add_(sr * wgt);
      }
      // rows below the next band's start are final -> flush them
      const auto flush_hi = (ri + 1 < n_row_bands)
                                ? grid.row_starts[ri + 1] * scale
                                : h * scale;
      const auto n_flush = flush_hi - span_lo;
      if (n_flush > 0) {
        // back to raw pixel units; the writer quantizes for uint16 outputs
        writer.write_rows(denormalize(acc.narrow(1, 0, n_flush), cfg.data));
        acc = acc.narrow(1, n_flush, acc.size(1) - n_flush).contiguous();
        span_lo = flush_hi;
      }
    }
    writer.finish();
  } catch (...) {
    // avoid leaving a truncated raster behind
    std::error_code ec;
    std::filesystem::remove(out_path, ec);
    if (was_training) net->train();
    throw;
  }
  if (was_training) net->train();
}

}  // namespace gansr
