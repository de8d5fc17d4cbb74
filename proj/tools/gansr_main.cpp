// gansr: configuration-driven GAN super-resolution for multiband rasters.
//
// Subcommands: train, validate, infer, inspect-config. Logs go to stderr;
// metrics, reports, and rasters go to files. Exit codes: 0 success,
// 1 configuration/usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gansr/config.hpp"
#include "gansr/data.hpp"
#include "gansr/metrics.hpp"
#include "gansr/tiling.hpp"
#include "gansr/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_positional) {
  if (config_positional) {
    cmd->add_option("config", args.config_path, "YAML configuration file")
        ->required();
  } else {
    cmd->add_option("--config", args.config_path, "YAML configuration file")
        ->required();
  }
  cmd->add_option("--set", args.overrides,
                  "Dotted-key override, e.g. Training.EMA.enabled=false "
                  "(repeatable; wins over file values)");
  cmd->add_option("--seed", args.seed,
                  "Fix every RNG stream (weight init, sampling, latents, "
                  "patch crops); shorthand for --set Training.seed=N");
}

gansr::Config load_effective(const CommonArgs& args) {
  auto overrides = args.overrides;
  if (args.seed) {
    overrides.push_back("Training.seed=" + std::to_string(*args.seed));
  }
  return gansr::load_config(args.config_path, overrides);
}

int run_train(const CommonArgs& args, const std::string& resume) {
  auto cfg = load_effective(args);
  auto train_data = gansr::Dataset::make(cfg.data, "train", cfg.train.seed);
  auto val_data = gansr::Dataset::make(cfg.data, "val", cfg.train.seed);

  const fs::path out_dir = cfg.logging.out_dir;
  fs::create_directories(out_dir);
  const fs::path metrics_path = out_dir / cfg.logging.metrics_file;
  if (resume.empty()) {
    fs::remove(metrics_path);  // fresh run: do not append to an older stream
  }
  // fit() owns the JSONL stream at <out_dir>/<metrics_file>
  std::vector<std::shared_ptr<gansr::MetricSink>> sinks{
      std::make_shared<gansr::ConsoleSink>(cfg.logging.log_interval,
                                           std::cerr)};

  gansr::Trainer trainer(cfg, train_data, val_data, sinks);
  if (!resume.empty()) {
    trainer.resume_from(resume);
    std::cerr << "resumed from " << resume << " at step " << trainer.step()
              << "\n";
  }
  std::cerr << "training " << gansr::to_string(cfg.model.model_type) << " x"
            << cfg.model.scale << " on " << train_data->num_scenes()
            << " scenes (" << trainer.total_steps() << " steps, "
            << val_data->val_samples().size() << " val patches)\n";
  auto paths = trainer.fit();
  std::cerr << "done: metrics " << paths.metrics.string() << ", best "
            << paths.best_checkpoint.string() << ", last "
            << paths.last_checkpoint.string() << "\n";
  return 0;
}

int run_validate(const CommonArgs& args, const std::string& checkpoint,
                 std::string out_dir_flag, bool no_ema) {
  auto cfg = load_effective(args);
  auto loaded =
      gansr::load_generator_from_checkpoint(checkpoint, cfg, !no_ema);
  auto val_data = gansr::Dataset::make(cfg.data, "val", cfg.train.seed);
  const auto& samples = val_data->val_samples();
  if (samples.empty()) {
    throw std::runtime_error("validation split produced no samples");
  }

  std::unique_ptr<gansr::PerceptualBackend> perceptual;
  if (cfg.losses.w_perceptual > 0.0) {
    perceptual = gansr::PerceptualBackend::load(cfg.losses.perceptual_backend,
                                                cfg.losses.perceptual_weights,
                                                cfg.data.rgb_triplet);
  }
  const std::uint64_t latent_seed = args.seed ? *args.seed : cfg.train.seed;
  auto report = gansr::evaluate(loaded.gen, samples, perceptual.get(),
                                latent_seed);

  const fs::path out_dir =
      out_dir_flag.empty() ? fs::path(cfg.logging.out_dir) / "eval"
                           : fs::path(out_dir_flag);
  fs::create_directories(out_dir);
  gansr::write_report_json(report, (out_dir / "report.json").string());
  gansr::write_report_csv(report, (out_dir / "report.csv").string());
  {
    torch::NoGradGuard ng;
    std::optional<torch::Tensor> latent;
    if (cfg.model.model_type == gansr::ModelType::kCgan) {
      latent = loaded.gen->sample_noise(1, latent_seed);
    }
    auto sr = loaded.gen
                  ->forward_with_noise(samples[0].lr.unsqueeze(0), latent,
                                       false)
                  .image.squeeze(0);
    gansr::write_preview_png((out_dir / "preview.png").string(), samples[0].lr,
                             sr, samples[0].hr, cfg.data.rgb_triplet,
                             cfg.model.scale);
  }
  std::cerr << "checkpoint step " << loaded.step
            << (loaded.used_ema ? " (EMA weights)" : " (live weights)") << ", "
            << report.count << " patches\n";
  std::cerr << "model    PSNR " << report.model_mean.psnr_db << " dB, SSIM "
            << report.model_mean.ssim << ", SAM " << report.model_mean.sam_rad
            << " rad\n";
  std::cerr << "bicubic  PSNR " << report.baseline_mean.psnr_db
            << " dB, SSIM " << report.baseline_mean.ssim << ", SAM "
            << report.baseline_mean.sam_rad << " rad\n";
  std::cerr << "report: " << (out_dir / "report.json").string() << "\n";
  return 0;
}

int run_infer(const CommonArgs& args, const std::string& checkpoint,
              const std::string& input, const std::string& output,
              const gansr::InferOptions& opts, bool no_ema) {
  auto cfg = load_effective(args);
  auto loaded =
      gansr::load_generator_from_checkpoint(checkpoint, cfg, !no_ema);
  gansr::InferOptions effective = opts;
  if (!effective.latent_seed && args.seed) {
    effective.latent_seed = *args.seed;
  }
  gansr::infer_scene(loaded.gen, cfg, input, output, effective);
  std::cerr << "wrote " << output << " (x" << cfg.model.scale << ", "
            << (loaded.used_ema ? "EMA" : "live") << " weights from step "
            << loaded.step << ")\n";
  return 0;
}

int run_inspect(const CommonArgs& args) {
  auto cfg = load_effective(args);
  std::cout << gansr::serialize_config(cfg);
  std::cerr << "ok: " << gansr::to_string(cfg.model.model_type) << " x"
            << cfg.model.scale << ", " << cfg.model.in_bands << "->"
            << cfg.model.out_bands << " bands, critic "
            << gansr::to_string(cfg.disc.disc_type) << ", fingerprint "
            << gansr::model_fingerprint(cfg.model) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN super-resolution for multiband remote-sensing rasters"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonArgs train_args, val_args, infer_args, inspect_args;
  std::string resume, checkpoint_v, checkpoint_i, input, output, report_dir;
  std::string blend = "linear";
  bool no_ema_v = false, no_ema_i = false;
  gansr::InferOptions opts;
  std::optional<std::uint64_t> latent_seed;

  auto* train = app.add_subcommand("train", "Run pretrain + adversarial training");
  add_common(train, train_args, false);
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* validate = app.add_subcommand(
      "validate", "Score a checkpoint on the validation split");
  add_common(validate, val_args, false);
  validate->add_option("--checkpoint", checkpoint_v, "Checkpoint to score")
      ->required();
  validate->add_option("--out", report_dir,
                       "Report directory (default: <out_dir>/eval)");
  validate->add_flag("--no-ema", no_ema_v, "Score live weights even when the "
                                           "checkpoint carries an EMA shadow");

  auto* infer = app.add_subcommand(
      "infer", "Super-resolve a GeoTIFF scene with tiled blending");
  add_common(infer, infer_args, false);
  infer->add_option("--checkpoint", checkpoint_i, "Trained checkpoint")
      ->required();
  infer->add_option("--input", input, "Input GeoTIFF")->required();
  infer->add_option("--output", output, "Output GeoTIFF")->required();
  infer->add_option("--tile", opts.tile_size, "Tile size in LR pixels")
      ->check(CLI::PositiveNumber);
  infer->add_option("--overlap", opts.overlap, "Tile overlap in LR pixels")
      ->check(CLI::NonNegativeNumber);
  infer->add_option("--blend", blend, "Blend ramp: linear or cosine")
      ->check(CLI::IsMember({"linear", "cosine"}));
  infer->add_flag("--float32", opts.float32_output,
                  "Write float32 reflectance instead of the input pixel type");
  infer->add_flag("--deflate", opts.deflate, "Deflate-compress the output");
  infer->add_option("--latent-seed", latent_seed,
                    "Scene latent seed (cgan models)");
  infer->add_flag("--no-ema", no_ema_i,
                  "Use live weights even when the checkpoint carries an EMA "
                  "shadow");

  auto* inspect = app.add_subcommand(
      "inspect-config", "Validate a config and print its effective form");
  add_common(inspect, inspect_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return run_train(train_args, resume);
    if (*validate)
      return run_validate(val_args, checkpoint_v, report_dir, no_ema_v);
    if (*infer) {
      opts.profile = blend == "cosine" ? gansr::BlendProfile::kCosine
                                       : gansr::BlendProfile::kLinear;
      opts.latent_seed = latent_seed;
      return run_infer(infer_args, checkpoint_i, input, output, opts, no_ema_i);
    }
    if (*inspect) return run_inspect(inspect_args);
  } catch (const gansr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
