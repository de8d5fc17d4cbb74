#ifndef GANSR_TRAINER_HPP
#define GANSR_TRAINER_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gansr/config.hpp"
#include "gansr/data.hpp"
#include "gansr/discriminator.hpp"
#include "gansr/generator.hpp"
#include "gansr/perceptual.hpp"
#include "gansr/schedule.hpp"

namespace gansr {

// ------------------------------------------------------------------ metrics

struct MetricRecord {
  std::int64_t step = 0;
  std::string name;
  double value = 0.0;
};

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void write(const MetricRecord& rec) = 0;
  virtual void flush() {}
};

// One JSON object per line: {"step":N,"name":"...","value":V}
class JsonlSink final : public MetricSink {
 public:
  explicit JsonlSink(const std::string& path);
  void write(const MetricRecord& rec) override;
  void flush() override;

 private:
  std::ofstream out_;
};

// Compact progress lines on a stream, printed once per `interval` steps.
class ConsoleSink final : public MetricSink {
 public:
  explicit ConsoleSink(std::int64_t interval, std::ostream& os);
  void write(const MetricRecord& rec) override;
  void flush() override;

 private:
  std::int64_t interval_;
  std::ostream& os_;
  std::int64_t line_step_ = -1;
  std::string line_;
};

// In-memory capture (tests, programmatic consumers).
class VectorSink final : public MetricSink {
 public:
  void write(const MetricRecord& rec) override { records.push_back(rec); }
  std::vector<MetricRecord> records;
};

// ---------------------------------------------------------------- optimizer

// Decay exclusion: only the weight matrices of Conv2d/ConvTranspose2d/Linear
// modules receive weight decay; biases, normalization affine parameters, and
// PReLU slopes never do.
struct ParamGroups {
  std::vector<torch::Tensor> decayed, undecayed;
  std::vector<std::string> decayed_names, undecayed_names;
};

ParamGroups split_decay_groups(const torch::nn::Module& module);

std::unique_ptr<torch::optim::Adam> build_adam(const ParamGroups& groups,
                                               double lr,
                                               std::pair<double, double> betas,
                                               double eps, double weight_decay);

void set_adam_lr(torch::optim::Adam& opt, double lr);

// ------------------------------------------------------------------ trainer

struct TrainerPaths {
  std::filesystem::path out_dir;
  std::filesystem::path metrics;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

// Alternating GAN optimization: critic first (when gated on), generator
// second, EMA after the generator step. TTUR learning rates are
// warmup- and plateau-scaled each step and inspectable via current_*_lr().
class Trainer {
 public:
  // Seeds torch's RNG from cfg.train.seed before building the networks, so
  // two trainers with the same config initialize identically. Datasets may
  // be null when steps are driven manually with external batches.
  Trainer(Config cfg, std::shared_ptr<Dataset> train_data,
          std::shared_ptr<Dataset> val_data,
          std::vector<std::shared_ptr<MetricSink>> sinks);

  // Full run: g_pretrain_steps + adversarial_steps, periodic validation,
  // best/last checkpoints, metric stream to all sinks.
  TrainerPaths fit();

  // One optimization step at the current step index (advances it).
  std::vector<MetricRecord> train_step(const Batch& batch);

  // Full validation pass (under EMA weights when enabled); feeds the
  // plateau controllers. Does not advance the step counter.
  std::vector<MetricRecord> validation_pass();

  void save_checkpoint(const std::string& path) const;
  void resume_from(const std::string& path);

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const;
  Generator& generator() { return gen_; }
  Critic& critic() { return critic_; }
  Ema& ema() { return ema_; }
  PerceptualBackend* perceptual() { return perceptual_.get(); }
  const Config& config() const { return cfg_; }
  double current_g_lr() const { return last_g_lr_; }
  double current_d_lr() const { return last_d_lr_; }
  double plateau_g_lr() const { return plateau_g_.lr(); }
  double plateau_d_lr() const { return plateau_d_.lr(); }

 private:
  void dispatch(const std::vector<MetricRecord>& recs);
  double finite_or_throw(double v, const char* term) const;

  Config cfg_;
  std::shared_ptr<Dataset> train_data_, val_data_;
  std::vector<std::shared_ptr<MetricSink>> sinks_;
  std::unique_ptr<PerceptualBackend> perceptual_;
  Generator gen_{nullptr};
  Critic critic_{nullptr};
  ParamGroups groups_g_, groups_d_;
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  Ema ema_;
  PlateauController plateau_g_, plateau_d_;
  std::int64_t step_ = 0;
  std::int64_t steps_per_epoch_ = 0;
  bool fit_sink_attached_ = false;
  double best_psnr_ = 0.0;
  bool has_best_ = false;
  double last_g_lr_ = 0.0;
  double last_d_lr_ = 0.0;
};

// Loads the generator (EMA weights when present and preferred) from a
// checkpoint written by Trainer::save_checkpoint. Verifies the
// architecture fingerprint against `cfg`.
struct LoadedGenerator {
  Generator gen{nullptr};
  bool used_ema = false;
  std::int64_t step = 0;
};
LoadedGenerator load_generator_from_checkpoint(const std::string& path,
                                               const Config& cfg,
                                               bool prefer_ema = true);

}  // namespace gansr

#endif  // GANSR_TRAINER_HPP
