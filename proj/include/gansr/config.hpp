#ifndef GANSR_CONFIG_HPP
#define GANSR_CONFIG_HPP

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gansr {

// Thrown for every schema/validation problem. key_path names the offending
// YAML key ("Model.scale", "Training.Optimizers.eps", ...).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

enum class ModelType { kRes, kRcab, kRrdb, kLka, kEsrgan, kCgan };
enum class DiscType { kStandard, kPatchGan, kEsrgan };
enum class NormKind { kBatch, kInstance, kNone };
enum class WarmupKind { kLinear, kCosine };
enum class PerceptualKind { kVgg19, kLpips };
enum class DataSource { kPairedDirs, kSyntheticDegradation };
enum class NormalizationKind { kReflectanceScale, kMinMax, kZScore };

std::string to_string(ModelType t);
std::string to_string(DiscType t);
std::string to_string(NormKind n);
std::string to_string(WarmupKind k);
std::string to_string(PerceptualKind k);
std::string to_string(DataSource s);
std::string to_string(NormalizationKind k);

struct ModelConfig {
  ModelType model_type = ModelType::kRes;
  int in_bands = 4;
  int out_bands = 4;
  int scale = 4;  // one of {2, 4, 8}
  int n_blocks = 16;
  int n_channels = 64;
  double residual_scale = 0.2;
  std::optional<int> noise_dim;        // cgan only
  std::optional<int> growth_channels;  // rrdb / esrgan only
};

struct DiscriminatorConfig {
  DiscType disc_type = DiscType::kStandard;
  std::optional<int> n_blocks;       // patchgan only
  int base_channels = 64;
  std::optional<int> linear_size;    // standard / esrgan only
  std::optional<NormKind> norm;      // patchgan only
};

struct TrainConfig {
  bool pretrain_g_only = true;
  long g_pretrain_steps = 10000;
  long adversarial_steps = 20000;
  long adv_loss_ramp_steps = 5000;
  double adv_loss_beta = 0.01;  // canonical home of Losses.w_adv
  double label_smoothing = 0.1; // real target 1-s, fake target s
  long g_warmup_steps = 500;
  WarmupKind g_warmup_type = WarmupKind::kLinear;
  long d_holdback_steps = 0;
  long d_holdback_epochs = 0;   // epoch spelling, resolved against steps/epoch
  double optim_g_lr = 1e-4;
  double optim_d_lr = 5e-5;
  std::pair<double, double> betas = {0.0, 0.99};
  double eps = 1e-7;
  double weight_decay = 0.0;
  double sched_factor = 0.5;
  int sched_patience = 10;
  int sched_cooldown = 0;
  double sched_min_lr = 1e-7;
  double gradient_clip_val = 0.0;  // 0 disables clipping
  bool ema_enabled = true;
  double ema_decay = 0.999;
  std::vector<int> gpus = {0};
  int precision = 32;  // 16 or 32
  unsigned long long seed = 42;
  long val_interval = 1000;
};

struct LossConfig {
  double w_l1 = 1.0;
  double w_sam = 0.0;
  double w_perceptual = 0.0;
  double w_tv = 0.0;
  // w_adv lives in TrainConfig::adv_loss_beta; the loader accepts both
  // spellings and canonicalizes. Exposed here read-only after load.
  double w_adv = 0.01;
  PerceptualKind perceptual_backend = PerceptualKind::kVgg19;
  std::string perceptual_weights;  // path to a weights container file
};

struct DataConfig {
  DataSource source = DataSource::kSyntheticDegradation;
  std::string train_dir = "data/train";
  std::string val_dir = "data/val";
  std::vector<std::string> bands = {"B02", "B03", "B04", "B08"};
  std::array<int, 3> rgb_triplet = {2, 1, 0};
  int scale = 4;  // must match Model.scale
  int patch_size_hr = 96;
  int batch_size = 8;
  NormalizationKind norm_kind = NormalizationKind::kReflectanceScale;
  double max_reflectance = 1.5;  // reflectance_scale ceiling (x1e4 units: 15000)
  double minmax_min = 0.0;
  double minmax_max = 1.0;
  double zscore_mean = 0.5;
  double zscore_std = 0.25;
  bool aug_flips = true;
  bool aug_rot90 = true;
};

struct LoggingConfig {
  std::string out_dir = "runs/default";
  std::string metrics_file = "metrics.jsonl";
  long log_interval = 50;
};

struct Config {
  ModelConfig model;
  DiscriminatorConfig disc;
  TrainConfig train;
  LossConfig losses;
  DataConfig data;
  LoggingConfig logging;
};

// Complete valid configuration; survives a serialize -> load round trip.
Config default_config();

// Loads, applies dotted-key overrides ("Training.EMA.enabled=false"), fills
// defaults, validates. Throws ConfigError naming the offending key path.
Config load_config(const std::string& path,
                   const std::vector<std::string>& overrides = {});

// Same pipeline over an in-memory YAML document.
Config parse_config(const std::string& yaml_text,
                    const std::vector<std::string>& overrides = {});

// Effective (post-default) configuration as canonical YAML.
std::string serialize_config(const Config& cfg);

// Re-checks every invariant on an already-built tree. Warnings (the
// optim_d_lr <= optim_g_lr convention) go to stderr.
void validate_config(const Config& cfg);

// Stable hash of the architecture-determining fields; embedded in
// checkpoints and verified on load.
std::string model_fingerprint(const ModelConfig& m);

}  // namespace gansr

#endif  // GANSR_CONFIG_HPP
