#ifndef GANSR_SCHEDULE_HPP
#define GANSR_SCHEDULE_HPP

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gansr/config.hpp"

namespace gansr {

// ---------------------------------------------------------------------------
// Pure, step-indexed training-dynamics calculators. Everything here is a
// function of (step, config) only, so resumed runs replay identical values.
// ---------------------------------------------------------------------------

struct ScheduleState {
  std::int64_t global_step = 0;
  bool pretrain_active = false;
  double adv_weight = 0.0;
  double g_lr_factor = 1.0;  // generator warmup multiplier
  double d_lr_factor = 0.0;  // critic warmup multiplier (0 while gated)
  bool d_updates_enabled = false;
};

// Adversarial-loss weight: 0 during pretrain, then a linear ramp from 0 to
// adv_loss_beta over adv_loss_ramp_steps, constant afterwards.
double adv_weight(std::int64_t step, const TrainConfig& cfg);

// Warmup multiplier in [0,1]: linear = min(1, step/warmup); cosine =
// 0.5*(1 - cos(pi * min(1, step/warmup))). warmup_steps == 0 -> 1.
double warmup_factor(std::int64_t step, std::int64_t warmup_steps,
                     WarmupKind kind);

// First step at which critic updates run: pretrain end plus the resolved
// holdback. d_holdback_epochs converts via steps_per_epoch (0 = unknown, only
// valid when the config uses the step spelling).
std::int64_t d_enable_step(const TrainConfig& cfg,
                           std::int64_t steps_per_epoch = 0);

// Whether the critic trains at `step`. Monotone: once true, stays true.
bool d_gate(std::int64_t step, const TrainConfig& cfg,
            std::int64_t steps_per_epoch = 0);

// Full derived schedule for one step. The critic's warmup clock starts at 0
// when its gate first opens.
ScheduleState compute_schedule(std::int64_t step, const TrainConfig& cfg,
                               std::int64_t steps_per_epoch = 0);

// Replays a reduce-on-plateau controller (mode = min) over `metric_history`
// starting from `current_lr` and returns the final learning rate.
double plateau_step(double current_lr, const std::vector<double>& metric_history,
                    int patience, double factor, int cooldown, double min_lr);

// Stateful reduce-on-plateau (mode = min): lr is multiplied by `factor` once
// the metric has failed to improve on more than `patience` consecutive
// evaluations; after a reduction, `cooldown` evaluations pass uncounted; lr
// never drops below `min_lr`.
class PlateauController {
 public:
  PlateauController() = default;
  PlateauController(double initial_lr, int patience, double factor,
                    int cooldown, double min_lr);

  // Feed one evaluation of the monitored metric; returns the (possibly
  // reduced) learning rate.
  double observe(double metric);
  double lr() const { return lr_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  double lr_ = 0.0;
  int patience_ = 10;
  double factor_ = 0.5;
  int cooldown_ = 0;
  double min_lr_ = 0.0;
  double best_ = 0.0;
  bool has_best_ = false;
  int bad_count_ = 0;
  int cooldown_left_ = 0;
};

// ---------------------------------------------------------------------------
// Exponential moving average of a module's parameters:
//   shadow <- decay * shadow + (1 - decay) * theta
// swap_in evaluates the net with the shadow weights; swap_out restores the
// live weights bit-identically.
// ---------------------------------------------------------------------------
class Ema {
 public:
  Ema() = default;

  static Ema init(const torch::nn::Module& net, double decay);

  void update(const torch::nn::Module& net);
  void swap_in(torch::nn::Module& net);
  void swap_out(torch::nn::Module& net);

  bool initialized() const { return !shadow_.empty(); }
  bool swapped() const { return swapped_; }
  double decay() const { return decay_; }
  std::int64_t updates_applied() const { return updates_; }
  const std::vector<std::pair<std::string, torch::Tensor>>& shadow() const {
    return shadow_;
  }

  // Checkpoint plumbing: shadow tensors keyed by parameter name.
  std::vector<std::pair<std::string, torch::Tensor>> export_shadow() const;
  static Ema restore(double decay, std::int64_t updates,
                     std::vector<std::pair<std::string, torch::Tensor>> shadow);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> shadow_;
  std::vector<std::pair<std::string, torch::Tensor>> stash_;
  double decay_ = 0.999;
  std::int64_t updates_ = 0;
  bool swapped_ = false;
};

}  // namespace gansr

#endif  // GANSR_SCHEDULE_HPP
