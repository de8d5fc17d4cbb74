#include "gansr/metrics.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gansr/losses.hpp"

namespace gansr {

namespace {

torch::Tensor as_batched(const torch::Tensor& t) {
  if (t.dim() == 3) return t.unsqueeze(0);
  if (t.dim() == 4) return t;
  throw std::invalid_argument("metrics: expected 3-d or 4-d image tensor");
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b,
                        const char* who) {
  if (!a.sizes().equals(b.sizes())) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                c10::str(a.sizes()) + " vs " +
                                c10::str(b.sizes()));
  }
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

nlohmann::json metric_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json metrics_json(const SampleMetrics& m, bool has_perc) {
  nlohmann::json j{{"psnr_db", metric_value(m.psnr_db)},
                   {"ssim", metric_value(m.ssim)},
                   {"sam_rad", metric_value(m.sam_rad)}};
  if (has_perc) j["perceptual"] = metric_value(m.perceptual);
  return j;
}

std::string csv_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

SampleMetrics mean_of(const std::vector<SampleMetrics>& rows) {
  SampleMetrics m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr_db += r.psnr_db;
    m.ssim += r.ssim;
    m.sam_rad += r.sam_rad;
    m.perceptual += r.perceptual;
  }
  const auto n = static_cast<double>(rows.size());
  m.psnr_db /= n;
  m.ssim /= n;
  m.sam_rad /= n;
  m.perceptual /= n;
  return m;
}

}  // namespace

double psnr(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range) {
  require_same_shape(pred, target, "psnr");
  if (data_range <= 0.0) {
    throw std::invalid_argument("psnr: data_range must be > 0");
  }
  const double mse = (pred.to(torch::kFloat64) - target.to(torch::kFloat64))
                         .pow(2)
                         .mean()
                         .item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range) {
  require_same_shape(pred, target, "ssim");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kK1 = 0.01;
  constexpr double kK2 = 0.03;

  auto x = as_batched(pred).to(torch::kFloat64);
  auto y = as_batched(target).to(torch::kFloat64);
  if (x.size(2) < kWindow || x.size(3) < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const auto bands = x.size(1);
  auto win = gaussian_window(kWindow, kSigma)
                 .view({1, 1, kWindow, kWindow})
                 .repeat({bands, 1, 1, 1});
  namespace F = torch::nn::functional;
  auto conv = [&](const torch::Tensor& t) {
    return F::conv2d(t, win, F::Conv2dFuncOptions().groups(bands));
  };
  auto mu_x = conv(x);
  auto mu_y = conv(y);
  auto mu_x2 = mu_x.pow(2);
  auto mu_y2 = mu_y.pow(2);
  auto mu_xy = mu_x * mu_y;
  auto sigma_x2 = conv(x * x) - mu_x2;
  auto sigma_y2 = conv(y * y) - mu_y2;
  auto sigma_xy = conv(x * y) - mu_xy;

  const double c1 = (kK1 * data_range) * (kK1 * data_range);
  const double c2 = (kK2 * data_range) * (kK2 * data_range);
  auto map = ((2.0 * mu_xy + c1) * (2.0 * sigma_xy + c2)) /
             ((mu_x2 + mu_y2 + c1) * (sigma_x2 + sigma_y2 + c2));
  return map.mean().item<double>();
}

torch::Tensor bicubic_upsample(const torch::Tensor& lr, int scale) {
  const bool batched = lr.dim() == 4;
  auto x = batched ? lr : lr.unsqueeze(0);
  namespace F = torch::nn::functional;
  auto out = F::interpolate(x, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{
                                       static_cast<double>(scale),
                                       static_cast<double>(scale)})
                                   .mode(torch::kBicubic)
                                   .align_corners(false));
  return batched ? out : out.squeeze(0);
}

SampleMetrics sample_metrics(const torch::Tensor& sr, const torch::Tensor& hr,
                             PerceptualBackend* perceptual) {
  SampleMetrics m;
  m.psnr_db = psnr(sr, hr, 1.0);
  m.ssim = ssim(sr, hr, 1.0);
  auto srb = as_batched(sr);
  auto hrb = as_batched(hr);
  m.sam_rad = srb.size(1) >= 2 ? sam_loss(srb, hrb).item<double>() : 0.0;
  if (perceptual != nullptr) {
    torch::NoGradGuard ng;
    m.perceptual = perceptual->distance(srb, hrb).item<double>();
  }
  return m;
}

EvalReport evaluate(Generator& net, const std::vector<PairSample>& samples,
                    PerceptualBackend* perceptual,
                    std::optional<std::uint64_t> latent_seed) {
  if (samples.empty()) {
    throw std::invalid_argument("evaluate: empty sample list");
  }
  EvalReport report;
  report.count = static_cast<std::int64_t>(samples.size());
  report.has_perceptual = perceptual != nullptr;

  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard ng;
  std::optional<torch::Tensor> latent;
  if (net->config().model_type == ModelType::kCgan) {
    latent = net->sample_noise(1, latent_seed.value_or(0));
  }
  const int scale = net->config().scale;
  for (const auto& s : samples) {
    auto sr = net->forward_with_noise(s.lr.unsqueeze(0), latent, false)
                  .image.squeeze(0);
    auto cubic = bicubic_upsample(s.lr, scale);
    report.model.push_back(sample_metrics(sr, s.hr, perceptual));
    report.baseline.push_back(sample_metrics(cubic, s.hr, perceptual));
  }
  if (was_training) net->train();

  report.model_mean = mean_of(report.model);
  report.baseline_mean = mean_of(report.baseline);
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["space"] = "normalized [0,1], data_range 1.0";
  j["perceptual_note"] = "raw distance, lower = more similar";
  j["count"] = report.count;
  j["aggregate"] = {{"model", metrics_json(report.model_mean, report.has_perceptual)},
                    {"baseline_bicubic",
                     metrics_json(report.baseline_mean, report.has_perceptual)}};
  auto& rows = j["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.model.size(); ++i) {
    rows.push_back(
        {{"index", i},
         {"model", metrics_json(report.model[i], report.has_perceptual)},
         {"baseline_bicubic",
          metrics_json(report.baseline[i], report.has_perceptual)}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  out << "index,model_psnr_db,model_ssim,model_sam_rad,model_perceptual,"
         "bicubic_psnr_db,bicubic_ssim,bicubic_sam_rad,bicubic_perceptual\n";
  auto row = [&](const std::string& idx, const SampleMetrics& m,
                 const SampleMetrics& b) {
    out << idx << ',' << csv_value(m.psnr_db) << ',' << csv_value(m.ssim) << ','
        << csv_value(m.sam_rad) << ',' << csv_value(m.perceptual) << ','
        << csv_value(b.psnr_db) << ',' << csv_value(b.ssim) << ','
        << csv_value(b.sam_rad) << ',' << csv_value(b.perceptual) << '\n';
  };
  for (std::size_t i = 0; i < report.model.size(); ++i) {
    row(std::to_string(i), report.model[i], report.baseline[i]);
  }
  row("mean", report.model_mean, report.baseline_mean);
}

void write_preview_png(const std::string& path, const torch::Tensor& lr,
                       const torch::Tensor& sr, const torch::Tensor& hr,
                       std::array<int, 3> rgb_triplet, int scale) {
  auto panel_err = [&](const char* what) {
    throw std::runtime_error("preview png: " + path + ": " + what);
  };
  auto pick_rgb = [&](const torch::Tensor& t) {
    const auto bands = t.size(0);
    torch::Tensor rgb;
    if (bands == 1) {
      rgb = t.repeat({3, 1, 1});
    } else {
      for (int idx : rgb_triplet) {
        if (idx < 0 || idx >= bands) panel_err("rgb triplet out of range");
      }
      auto sel = torch::tensor({static_cast<std::int64_t>(rgb_triplet[0]),
                                static_cast<std::int64_t>(rgb_triplet[1]),
                                static_cast<std::int64_t>(rgb_triplet[2])},
                               torch::kInt64);
      rgb = t.index_select(0, sel);
    }
    return (rgb.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8);
  };

  auto left = pick_rgb(bicubic_upsample(lr, scale));
  auto mid = pick_rgb(sr);
  auto right = pick_rgb(hr);
  if (!left.sizes().equals(mid.sizes()) || !mid.sizes().equals(right.sizes())) {
    panel_err("panel sizes differ");
  }
  auto composite = torch::cat({left, mid, right}, 2).contiguous();  // (3,H,3W)
  const auto height = composite.size(1);
  const auto width = composite.size(2);
  // interleave to HWC for libpng
  auto hwc = composite.permute({1, 2, 0}).contiguous();

  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) panel_err("cannot open for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    if (png != nullptr) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    panel_err("libpng failure");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* base = hwc.data_ptr<std::uint8_t>();
  for (std::int64_t y = 0; y < height; ++y) {
    png_write_row(png, base + y * width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace gansr
