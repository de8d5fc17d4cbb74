#ifndef GANSR_TESTS_SUPPORT_HELPERS_HPP
#define GANSR_TESTS_SUPPORT_HELPERS_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gansr/config.hpp"
#include "gansr/perceptual.hpp"

namespace gansr::testsupport {

// Unique directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path_.string() : (path_ / rel).string();
  }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Loop-based reference metrics (independent of the library's tensor code).
// All take CPU tensors; layouts as noted.
// ---------------------------------------------------------------------------

// mean |a - b| over all elements
double ref_l1(const torch::Tensor& a, const torch::Tensor& b);

// mean spectral angle in radians over pixels; (bands, h, w) or batched
double ref_sam(const torch::Tensor& pred, const torch::Tensor& target,
               double eps);

// anisotropic TV: (sum |dx| + sum |dy|) / (n_dx + n_dy); (..., h, w)
double ref_tv(const torch::Tensor& x);

// Gaussian-window SSIM, window 11 / sigma 1.5 / k1 .01 / k2 .03, valid
// convolution, averaged over bands; (bands, h, w)
double ref_ssim(const torch::Tensor& a, const torch::Tensor& b,
                double data_range);

// Central finite differences of a scalar-valued function at `x` (double
// tensor) against autograd, reporting the worst relative deviation
// max(|fd - an|) / max(max|an|, floor).
double fd_grad_rel_err(
    const std::function<torch::Tensor(const torch::Tensor&)>& f,
    const torch::Tensor& x, double h = 1e-4, double floor = 1e-3);

// ---------------------------------------------------------------------------
// Synthetic scenes and datasets
// ---------------------------------------------------------------------------

// Procedural multiband texture in raw reflectance units (roughly
// [500, 14500]): smooth background + random rectangles with per-band
// spectra + sinusoidal gratings. Deterministic in `seed`. (bands, h, w) f32.
torch::Tensor make_texture_scene(std::uint64_t seed, int bands, int h, int w);

// Writes `n` uint16 GeoTIFF scenes (scene_000.tif ...) with a 10 m pixel
// scale into `dir`.
void write_toy_dataset(const std::filesystem::path& dir, int n, int bands,
                       int h, int w, std::uint64_t seed);

// Schema-shaped seeded random weights through the real container writer;
// loadable by PerceptualBackend::load.
void write_random_perceptual_weights(const std::string& path,
                                     PerceptualKind kind, std::uint64_t seed);

// Max |a - b| as a double (0 for empty tensors).
double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b);

// Bitwise equality of two files.
bool files_identical(const std::string& a, const std::string& b);

}  // namespace gansr::testsupport

#endif  // GANSR_TESTS_SUPPORT_HELPERS_HPP
