#include "helpers.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "gansr/checkpoint.hpp"
#include "gansr/geotiff.hpp"

namespace fs = std::filesystem;

namespace gansr::testsupport {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<std::uint64_t> counter{0};
  const auto id = counter.fetch_add(1);
  path_ = fs::temp_directory_path() /
          ("gansr-" + tag + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(id));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

// ----------------------------------------------------------- loop references

double ref_l1(const torch::Tensor& a, const torch::Tensor& b) {
  auto af = a.reshape(-1).to(torch::kFloat64).contiguous();
  auto bf = b.reshape(-1).to(torch::kFloat64).contiguous();
  const auto* pa = af.data_ptr<double>();
  const auto* pb = bf.data_ptr<double>();
  double sum = 0;
  for (std::int64_t i = 0; i < af.numel(); ++i) sum += std::abs(pa[i] - pb[i]);
  return sum / static_cast<double>(af.numel());
}

double ref_sam(const torch::Tensor& pred, const torch::Tensor& target,
               double eps) {
  auto p = pred.dim() == 3 ? pred.unsqueeze(0) : pred;
  auto t = target.dim() == 3 ? target.unsqueeze(0) : target;
  p = p.to(torch::kFloat64).contiguous();
  t = t.to(torch::kFloat64).contiguous();
  const std::int64_t n = p.size(0), c = p.size(1), h = p.size(2), w = p.size(3);
  const auto* pp = p.data_ptr<double>();
  const auto* pt = t.data_ptr<double>();
  double sum = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        double dot = 0, na = 0, nb = 0;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double va = pp[((b * c + ch) * h + y) * w + x];
          const double vb = pt[((b * c + ch) * h + y) * w + x];
          dot += va * vb;
          na += va * va;
          nb += vb * vb;
        }
        double cosv = dot / (std::sqrt(na) * std::sqrt(nb) + eps);
        cosv = std::min(1.0 - 1e-7, std::max(-1.0 + 1e-7, cosv));
        sum += std::acos(cosv);
      }
    }
  }
  return sum / static_cast<double>(n * h * w);
}

double ref_tv(const torch::Tensor& x) {
  auto v = x.dim() == 3 ? x.unsqueeze(0) : x;
  v = v.to(torch::kFloat64).contiguous();
  const std::int64_t n = v.size(0), c = v.size(1), h = v.size(2), w = v.size(3);
  const auto* p = v.data_ptr<double>();
  auto at = [&](std::int64_t b, std::int64_t ch, std::int64_t y,
                std::int64_t xx) {
    return p[((b * c + ch) * h + y) * w + xx];
  };
  double sum = 0;
  std::int64_t terms = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx + 1 < w; ++xx) {
          sum += std::abs(at(b, ch, y, xx + 1) - at(b, ch, y, xx));
          ++terms;
        }
      }
      for (std::int64_t y = 0; y + 1 < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
          sum += std::abs(at(b, ch, y + 1, xx) - at(b, ch, y, xx));
          ++terms;
        }
      }
    }
  }
  return sum / static_cast<double>(terms);
}

double ref_ssim(const torch::Tensor& a, const torch::Tensor& b,
                double data_range) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  double win[kWin];
  double wsum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    win[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    wsum += win[i];
  }
  for (double& v : win) v /= wsum;

  auto av = a.to(torch::kFloat64).contiguous();
  auto bv = b.to(torch::kFloat64).contiguous();
  const std::int64_t c = av.size(0), h = av.size(1), w = av.size(2);
  if (h < kWin || w < kWin) throw std::invalid_argument("ref_ssim: too small");
  const auto* pa = av.data_ptr<double>();
  const auto* pb = bv.data_ptr<double>();
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  double total = 0;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double acc = 0;
    std::int64_t cnt = 0;
    for (std::int64_t y = 0; y + kWin <= h; ++y) {
      for (std::int64_t x = 0; x + kWin <= w; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double wij = win[i] * win[j];
            const double va = pa[(ch * h + y + i) * w + x + j];
            const double vb = pb[(ch * h + y + i) * w + x + j];
            mu_a += wij * va;
            mu_b += wij * vb;
            aa += wij * va * va;
            bb += wij * vb * vb;
            ab += wij * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        const double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) *
                          (var_a + var_b + c2));
        acc += s;
        ++cnt;
      }
    }
    total += acc / static_cast<double>(cnt);
  }
  return total / static_cast<double>(c);
}

double fd_grad_rel_err(
    const std::function<torch::Tensor(const torch::Tensor&)>& f,
    const torch::Tensor& x, double h, double floor) {
  auto xd = x.detach().to(torch::kFloat64).clone().set_requires_grad(true);
  auto out = f(xd);
  out.backward();
  auto analytic = xd.grad().reshape(-1).contiguous();

  auto flat = xd.detach().clone().reshape(-1);
  auto fd = torch::zeros_like(flat);
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    auto probe = flat.clone();
    probe[i] += h;
    const double up = f(probe.reshape(x.sizes())).item<double>();
    probe[i] -= 2 * h;
    const double dn = f(probe.reshape(x.sizes())).item<double>();
    fd[i] = (up - dn) / (2 * h);
  }
  const double scale =
      std::max(analytic.abs().max().item<double>(), floor);
  return (fd - analytic).abs().max().item<double>() / scale;
}

// ------------------------------------------------------------------- scenes

torch::Tensor make_texture_scene(std::uint64_t seed, int bands, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  auto ys = torch::arange(h, torch::kFloat32).reshape({h, 1}) /
            static_cast<float>(h);
  auto xs = torch::arange(w, torch::kFloat32).reshape({1, w}) /
            static_cast<float>(w);
  auto scene = torch::zeros({bands, h, w}, torch::kFloat32);

  // smooth per-band background gradient
  for (int b = 0; b < bands; ++b) {
    const float base = static_cast<float>(2000 + 6000 * uni(rng));
    const float gy = static_cast<float>((uni(rng) - 0.5) * 3000);
    const float gx = static_cast<float>((uni(rng) - 0.5) * 3000);
    scene[b] = base + gy * ys + gx * xs;
  }
  // rectangles with per-band spectra (sharp edges: the structure bicubic
  // smears and a texture prior can recover)
  const int n_rects = 6;
  for (int r = 0; r < n_rects; ++r) {
    const int rh = 4 + static_cast<int>(uni(rng) * (h / 2));
    const int rw = 4 + static_cast<int>(uni(rng) * (w / 2));
    const int ry = static_cast<int>(uni(rng) * (h - rh));
    const int rx = static_cast<int>(uni(rng) * (w - rw));
    for (int b = 0; b < bands; ++b) {
      const float amp = static_cast<float>((uni(rng) - 0.3) * 4000);
      scene[b].narrow(0, ry, rh).narrow(1, rx, rw) += amp;
    }
  }
  // band-correlated gratings, capped at 0.09 cycles/px so the pattern
  // survives x4 area degradation (0.36 cycles/px in LR, under Nyquist) and
  // stays recoverable by a learner while bicubic still attenuates it
  for (int g = 0; g < 3; ++g) {
    const double fy = (uni(rng) - 0.5) * 0.18 * h;
    const double fx = (uni(rng) - 0.5) * 0.18 * w;
    const double phase = uni(rng) * 2 * M_PI;
    auto wave = torch::sin(2 * M_PI * (fy * ys + fx * xs) + phase);
    for (int b = 0; b < bands; ++b) {
      const float amp = static_cast<float>(400 + 800 * uni(rng));
      scene[b] += amp * wave;
    }
  }
  return scene.clamp(500.0f, 14500.0f);
}

void write_toy_dataset(const fs::path& dir, int n, int bands, int h, int w,
                       std::uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    GeoTiffImage img;
    img.data = make_texture_scene(seed + static_cast<std::uint64_t>(i) * 7919,
                                  bands, h, w);
    img.pixel_type = PixelType::kUint16;
    img.geo.has_pixel_scale = true;
    img.geo.pixel_scale = {10.0, 10.0, 0.0};
    img.geo.has_tiepoint = true;
    img.geo.tiepoint = {0, 0, 0, 600000.0, 5000000.0, 0.0};
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d.tif", i);
    write_geotiff((dir / name).string(), img, /*deflate=*/false);
  }
}

void write_random_perceptual_weights(const std::string& path,
                                     PerceptualKind kind, std::uint64_t seed) {
  torch::manual_seed(seed);
  TensorFile file;
  file.meta["backend"] = kind == PerceptualKind::kVgg19 ? "vgg19" : "lpips";
  file.meta["source"] = "test fixture (seeded random)";
  for (const auto& [name, shape] : perceptual_weight_schema(kind)) {
    auto t = torch::randn(shape, torch::kFloat32) * 0.05;
    if (name.rfind("lin", 0) == 0) t = t.abs();
    file.tensors.emplace_back(name, t);
  }
  save_tensor_file(path, file);
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() == 0) return 0.0;
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64))
      .abs()
      .max()
      .item<double>();
}

bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string ca((std::istreambuf_iterator<char>(fa)),
                 std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)),
                 std::istreambuf_iterator<char>());
  return !ca.empty() && ca == cb;
}

}  // namespace gansr::testsupport
