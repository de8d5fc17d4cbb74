#ifndef GANSR_METRICS_HPP
#define GANSR_METRICS_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gansr/data.hpp"
#include "gansr/generator.hpp"
#include "gansr/perceptual.hpp"

namespace gansr {

// 10*log10(data_range^2 / MSE); +inf when the images are identical.
double psnr(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range = 1.0);

// Gaussian-window SSIM (window 11, sigma 1.5, k1 0.01, k2 0.03), averaged
// over bands. Errors when the image is smaller than the window.
double ssim(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range = 1.0);

// Bicubic upsampling baseline (align_corners=false).
torch::Tensor bicubic_upsample(const torch::Tensor& lr, int scale);

struct SampleMetrics {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_rad = 0.0;
  double perceptual = 0.0;
};

// Per-sample rows for the model and the bicubic baseline, plus arithmetic
// means. Metrics are computed in normalized [0,1] space with data_range 1.0;
// the perceptual column is a distance (lower = more similar) and is present
// only when a backend was supplied.
struct EvalReport {
  std::vector<SampleMetrics> model;
  std::vector<SampleMetrics> baseline;
  SampleMetrics model_mean;
  SampleMetrics baseline_mean;
  std::int64_t count = 0;
  bool has_perceptual = false;
};

EvalReport evaluate(Generator& net, const std::vector<PairSample>& samples,
                    PerceptualBackend* perceptual = nullptr,
                    std::optional<std::uint64_t> latent_seed = {});

// Metrics for one precomputed SR/HR pair (shared by evaluate and the
// trainer's validation pass).
SampleMetrics sample_metrics(const torch::Tensor& sr, const torch::Tensor& hr,
                             PerceptualBackend* perceptual = nullptr);

void write_report_json(const EvalReport& report, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

// 8-bit side-by-side composite (bicubic LR | SR | HR) of the configured RGB
// triplet, clamped from normalized space.
void write_preview_png(const std::string& path, const torch::Tensor& lr,
                       const torch::Tensor& sr, const torch::Tensor& hr,
                       std::array<int, 3> rgb_triplet, int scale);

}  // namespace gansr

#endif  // GANSR_METRICS_HPP
