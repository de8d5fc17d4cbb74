#include "gansr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gansr {

double adv_weight(std::int64_t step, const TrainConfig& cfg) {
  const std::int64_t pretrain = cfg.pretrain_g_only ? cfg.g_pretrain_steps : 0;
  if (step < pretrain) {
    return 0.0;
  }
  const std::int64_t ramp = cfg.adv_loss_ramp_steps;
  if (ramp <= 0) {
    return cfg.adv_loss_beta;
  }
  const double frac =
      std::min(1.0, static_cast<double>(step - pretrain) / static_cast<double>(ramp));
  return cfg.adv_loss_beta * frac;
}

double warmup_factor(std::int64_t step, std::int64_t warmup_steps,
                     WarmupKind kind) {
  if (warmup_steps <= 0) {
    return 1.0;
  }
  const double frac = std::min(
      1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
  switch (kind) {
    case WarmupKind::kLinear:
      return frac;
    case WarmupKind::kCosine:
      return 0.5 * (1.0 - std::cos(M_PI * frac));
  }
  return 1.0;
}

std::int64_t d_enable_step(const TrainConfig& cfg, std::int64_t steps_per_epoch) {
  const std::int64_t pretrain = cfg.pretrain_g_only ? cfg.g_pretrain_steps : 0;
  std::int64_t holdback = cfg.d_holdback_steps;
  if (cfg.d_holdback_epochs > 0) {
    if (steps_per_epoch <= 0) {
      throw std::invalid_argument(
          "d_enable_step: d_holdback_epochs is set but steps_per_epoch is "
          "unknown");
    }
    holdback += cfg.d_holdback_epochs * steps_per_epoch;
  }
  return pretrain + holdback;
}

bool d_gate(std::int64_t step, const TrainConfig& cfg,
            std::int64_t steps_per_epoch) {
  return step >= d_enable_step(cfg, steps_per_epoch);
}

ScheduleState compute_schedule(std::int64_t step, const TrainConfig& cfg,
                               std::int64_t steps_per_epoch) {
  ScheduleState s;
  s.global_step = step;
  const std::int64_t pretrain = cfg.pretrain_g_only ? cfg.g_pretrain_steps : 0;
  s.pretrain_active = step < pretrain;
  s.adv_weight = adv_weight(step, cfg);
  s.g_lr_factor = warmup_factor(step, cfg.g_warmup_steps, cfg.g_warmup_type);
  s.d_updates_enabled = d_gate(step, cfg, steps_per_epoch);
  if (s.d_updates_enabled) {
    // The critic's warmup clock starts from 0 the moment its gate opens.
    const std::int64_t d_step = step - d_enable_step(cfg, steps_per_epoch);
    s.d_lr_factor = warmup_factor(d_step, cfg.g_warmup_steps, cfg.g_warmup_type);
  } else {
    s.d_lr_factor = 0.0;
  }
  return s;
}

// ------------------------------------------------------------------ plateau

PlateauController::PlateauController(double initial_lr, int patience,
                                     double factor, int cooldown, double min_lr)
    : lr_(initial_lr),
      patience_(patience),
      factor_(factor),
      cooldown_(cooldown),
      min_lr_(min_lr) {
  if (factor_ <= 0.0 || factor_ >= 1.0) {
    throw std::invalid_argument("plateau: factor must be in (0, 1)");
  }
  if (min_lr_ < 0.0) {
    throw std::invalid_argument("plateau: min_lr must be >= 0");
  }
}

double PlateauController::observe(double metric) {
  if (!has_best_ || metric < best_) {
    best_ = metric;
    has_best_ = true;
    bad_count_ = 0;
  } else if (cooldown_left_ > 0) {
    bad_count_ = 0;  // evaluations during cooldown are not counted
  } else {
    ++bad_count_;
  }
  if (cooldown_left_ > 0) {
    --cooldown_left_;
  } else if (bad_count_ > patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    cooldown_left_ = cooldown_;
    bad_count_ = 0;
  }
  return lr_;
}

nlohmann::json PlateauController::state() const {
  return nlohmann::json{{"lr", lr_},
                        {"patience", patience_},
                        {"factor", factor_},
                        {"cooldown", cooldown_},
                        {"min_lr", min_lr_},
                        {"best", best_},
                        {"has_best", has_best_},
                        {"bad_count", bad_count_},
                        {"cooldown_left", cooldown_left_}};
}

void PlateauController::restore(const nlohmann::json& j) {
  lr_ = j.at("lr").get<double>();
  patience_ = j.at("patience").get<int>();
  factor_ = j.at("factor").get<double>();
  cooldown_ = j.at("cooldown").get<int>();
  min_lr_ = j.at("min_lr").get<double>();
  best_ = j.at("best").get<double>();
  has_best_ = j.at("has_best").get<bool>();
  bad_count_ = j.at("bad_count").get<int>();
  cooldown_left_ = j.at("cooldown_left").get<int>();
}

double plateau_step(double current_lr, const std::vector<double>& metric_history,
                    int patience, double factor, int cooldown, double min_lr) {
  PlateauController ctl(current_lr, patience, factor, cooldown, min_lr);
  for (double m : metric_history) {
    ctl.observe(m);
  }
  return ctl.lr();
}

// ---------------------------------------------------------------------- EMA

Ema Ema::init(const torch::nn::Module& net, double decay) {
  if (decay < 0.0 || decay >= 1.0) {
    throw std::invalid_argument("ema: decay must be in [0, 1)");
  }
  Ema e;
  e.decay_ = decay;
  for (const auto& p : net.named_parameters(/*recurse=*/true)) {
    e.shadow_.emplace_back(p.key(), p.value().detach().clone());
  }
  return e;
}

void Ema::update(const torch::nn::Module& net) {
  torch::NoGradGuard ng;
  auto params = net.named_parameters(/*recurse=*/true);
  if (static_cast<size_t>(params.size()) != shadow_.size()) {
    throw std::runtime_error("ema: parameter count changed since init");
  }
  for (auto& [name, shadow] : shadow_) {
    auto* live = params.find(name);
    if (live == nullptr || !live->sizes().equals(shadow.sizes())) {
      throw std::runtime_error("ema: parameter '" + name +
                               "' missing or reshaped since init");
    }
    shadow.mul_(decay_).add_(*live, 1.0 - decay_);
  }
  ++updates_;
}

void Ema::swap_in(torch::nn::Module& net) {
  if (swapped_) {
    throw std::logic_error("ema: swap_in called twice without swap_out");
  }
  torch::NoGradGuard ng;
  auto params = net.named_parameters(/*recurse=*/true);
  stash_.clear();
  for (auto& [name, shadow] : shadow_) {
    auto* live = params.find(name);
    if (live == nullptr) {
      throw std::runtime_error("ema: parameter '" + name + "' not found");
    }
    stash_.emplace_back(name, live->detach().clone());
    live->copy_(shadow);
  }
  swapped_ = true;
}

void Ema::swap_out(torch::nn::Module& net) {
  if (!swapped_) {
    throw std::logic_error("ema: swap_out without swap_in");
  }
  torch::NoGradGuard ng;
  auto params = net.named_parameters(/*recurse=*/true);
  for (auto& [name, saved] : stash_) {
    auto* live = params.find(name);
    if (live == nullptr) {
      throw std::runtime_error("ema: parameter '" + name + "' not found");
    }
    live->copy_(saved);
  }
  stash_.clear();
  swapped_ = false;
}

std::vector<std::pair<std::string, torch::Tensor>> Ema::export_shadow() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  out.reserve(shadow_.size());
  for (const auto& [name, t] : shadow_) {
    out.emplace_back(name, t.clone());
  }
  return out;
}

Ema Ema::restore(double decay, std::int64_t updates,
                 std::vector<std::pair<std::string, torch::Tensor>> shadow) {
  Ema e;
  e.decay_ = decay;
  e.updates_ = updates;
  e.shadow_ = std::move(shadow);
  return e;
}

}  // namespace gansr
