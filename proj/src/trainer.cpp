#include "gansr/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <ATen/Context.h>
#include <torch/nn/utils/clip_grad.h>

#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gansr/checkpoint.hpp"
#include "gansr/losses.hpp"
#include "gansr/metrics.hpp"

namespace fs = std::filesystem;

namespace gansr {

// ------------------------------------------------------------------- sinks

JsonlSink::JsonlSink(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path);
}

void JsonlSink::write(const MetricRecord& rec) {
  nlohmann::json j{{"step", rec.step}, {"name", rec.name}, {"value", rec.value}};
  out_ << j.dump() << '\n';
}

void JsonlSink::flush() { out_.flush(); }

ConsoleSink::ConsoleSink(std::int64_t interval, std::ostream& os)
    : interval_(interval < 1 ? 1 : interval), os_(os) {}

void ConsoleSink::write(const MetricRecord& rec) {
  if (rec.step % interval_ != 0 && !rec.name.starts_with("validation/")) {
    return;
  }
  if (rec.step != line_step_ && !line_.empty()) {
    os_ << line_ << '\n';
    line_.clear();
  }
  if (line_.empty()) {
    line_ = "step " + std::to_string(rec.step);
    line_step_ = rec.step;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), " %s=%.6g", rec.name.c_str(), rec.value);
  line_ += buf;
}

void ConsoleSink::flush() {
  if (!line_.empty()) {
    os_ << line_ << '\n';
    line_.clear();
  }
  os_.flush();
}

// -------------------------------------------------------------- optimizers

ParamGroups split_decay_groups(const torch::nn::Module& module) {
  ParamGroups out;
  for (const auto& item : module.named_modules("", /*include_self=*/true)) {
    const auto& prefix = item.key();
    const auto& sub = item.value();
    const bool decayable_kind =
        (std::dynamic_pointer_cast<torch::nn::Conv2dImpl>(sub) != nullptr) ||
        (std::dynamic_pointer_cast<torch::nn::ConvTranspose2dImpl>(sub) !=
         nullptr) ||
        (std::dynamic_pointer_cast<torch::nn::LinearImpl>(sub) != nullptr);
    for (const auto& p : sub->named_parameters(/*recurse=*/false)) {
      const std::string full =
          prefix.empty() ? p.key() : prefix + "." + p.key();
      if (decayable_kind && p.key() == "weight") {
        out.decayed.push_back(p.value());
        out.decayed_names.push_back(full);
      } else {
        out.undecayed.push_back(p.value());
        out.undecayed_names.push_back(full);
      }
    }
  }
  return out;
}

std::unique_ptr<torch::optim::Adam> build_adam(const ParamGroups& groups,
                                               double lr,
                                               std::pair<double, double> betas,
                                               double eps, double weight_decay) {
  auto make_opts = [&](double wd) {
    auto o = std::make_unique<torch::optim::AdamOptions>(lr);
    o->betas(std::make_tuple(betas.first, betas.second))
        .eps(eps)
        .weight_decay(wd);
    return o;
  };
  std::vector<torch::optim::OptimizerParamGroup> pgs;
  if (!groups.decayed.empty()) {
    pgs.emplace_back(groups.decayed, make_opts(weight_decay));
  }
  if (!groups.undecayed.empty()) {
    pgs.emplace_back(groups.undecayed, make_opts(0.0));
  }
  if (pgs.empty()) {
    throw std::invalid_argument("build_adam: module has no parameters");
  }
  return std::make_unique<torch::optim::Adam>(
      pgs, torch::optim::AdamOptions(lr)
               .betas(std::make_tuple(betas.first, betas.second))
               .eps(eps));
}

void set_adam_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

namespace {

torch::Tensor optimizer_bytes(const torch::optim::Adam& opt) {
  std::ostringstream ss;
  torch::serialize::OutputArchive ar;
  opt.save(ar);
  ar.save_to(ss);
  const std::string s = ss.str();
  auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr(), s.data(), s.size());
  return t;
}

void optimizer_from_bytes(torch::optim::Adam& opt, const torch::Tensor& bytes) {
  auto t = bytes.contiguous();
  torch::serialize::InputArchive ar;
  ar.load_from(reinterpret_cast<const char*>(t.data_ptr<std::uint8_t>()),
               static_cast<std::size_t>(t.numel()));
  opt.load(ar);
}

std::vector<std::pair<std::string, torch::Tensor>> with_prefix_stripped(
    const TensorFile& file, const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& [name, tensor] : file.tensors) {
    if (name.rfind(prefix, 0) == 0) {
      out.emplace_back(name.substr(prefix.size()), tensor);
    }
  }
  return out;
}

}  // namespace

// ----------------------------------------------------------------- trainer

Trainer::Trainer(Config cfg, std::shared_ptr<Dataset> train_data,
                 std::shared_ptr<Dataset> val_data,
                 std::vector<std::shared_ptr<MetricSink>> sinks)
    : cfg_(std::move(cfg)),
      train_data_(std::move(train_data)),
      val_data_(std::move(val_data)),
      sinks_(std::move(sinks)) {
  validate_config(cfg_);
  if (cfg_.train.gpus.size() > 1) {
    std::cerr << "[gansr] Training.gpus lists " << cfg_.train.gpus.size()
              << " devices; this build runs single-device and uses the first "
                 "entry only.\n";
  }
  if (cfg_.train.precision == 16 && !torch::cuda::is_available()) {
    std::cerr << "[gansr] precision: 16 requested without CUDA; computing in "
                 "32-bit.\n";
  }
  // Seed before construction: parameter init consumes the RNG stream.
  torch::manual_seed(cfg_.train.seed);
  gen_ = build_generator(cfg_.model);
  critic_ = build_critic(cfg_.disc, cfg_.model.out_bands);

  groups_g_ = split_decay_groups(*gen_);
  groups_d_ = split_decay_groups(*critic_);
  opt_g_ = build_adam(groups_g_, cfg_.train.optim_g_lr, cfg_.train.betas,
                      cfg_.train.eps, cfg_.train.weight_decay);
  opt_d_ = build_adam(groups_d_, cfg_.train.optim_d_lr, cfg_.train.betas,
                      cfg_.train.eps, cfg_.train.weight_decay);

  if (cfg_.train.ema_enabled) {
    ema_ = Ema::init(*gen_, cfg_.train.ema_decay);
  }
  plateau_g_ = PlateauController(cfg_.train.optim_g_lr, cfg_.train.sched_patience,
                                 cfg_.train.sched_factor, cfg_.train.sched_cooldown,
                                 cfg_.train.sched_min_lr);
  plateau_d_ = PlateauController(cfg_.train.optim_d_lr, cfg_.train.sched_patience,
                                 cfg_.train.sched_factor, cfg_.train.sched_cooldown,
                                 cfg_.train.sched_min_lr);
  if (cfg_.losses.w_perceptual > 0.0) {
    perceptual_ = PerceptualBackend::load(cfg_.losses.perceptual_backend,
                                          cfg_.losses.perceptual_weights,
                                          cfg_.data.rgb_triplet);
  }
  if (train_data_ != nullptr) {
    steps_per_epoch_ = train_data_->steps_per_epoch(cfg_.data.batch_size);
  }
}

std::int64_t Trainer::total_steps() const {
  const std::int64_t pretrain =
      cfg_.train.pretrain_g_only ? cfg_.train.g_pretrain_steps : 0;
  return pretrain + cfg_.train.adversarial_steps;
}

void Trainer::dispatch(const std::vector<MetricRecord>& recs) {
  for (const auto& r : recs) {
    for (auto& s : sinks_) {
      s->write(r);
    }
  }
}

double Trainer::finite_or_throw(double v, const char* term) const {
  if (!std::isfinite(v)) {
    throw std::runtime_error("non-finite loss at step " + std::to_string(step_) +
                             ": " + term + " = " + std::to_string(v));
  }
  return v;
}

std::vector<MetricRecord> Trainer::train_step(const Batch& batch) {
  const auto sched = compute_schedule(step_, cfg_.train, steps_per_epoch_);
  std::vector<MetricRecord> recs;
  auto emit = [&](const std::string& name, double value) {
    recs.push_back(MetricRecord{step_, name, value});
  };
  emit("training/pretrain_phase", sched.pretrain_active ? 1.0 : 0.0);
  emit("training/adv_loss_weight", sched.adv_weight);

  gen_->train();
  critic_->train();
  auto fake = gen_->forward_with_noise(batch.lr, std::nullopt, false).image;

  // ---- critic update (gated) -------------------------------------------
  const bool adversarial_phase = !sched.pretrain_active;
  if (sched.d_updates_enabled) {
    auto real_logits = critic_->forward(batch.hr);
    auto fake_logits = critic_->forward(fake.detach());
    auto d_loss = adversarial_d_loss(real_logits, fake_logits,
                                     cfg_.train.label_smoothing);
    const double d_val =
        finite_or_throw(d_loss.item<double>(), "discriminator/adversarial_loss");
    opt_d_->zero_grad();
    d_loss.backward();
    if (cfg_.train.gradient_clip_val > 0.0) {
      torch::nn::utils::clip_grad_norm_(critic_->parameters(),
                                        cfg_.train.gradient_clip_val);
    }
    last_d_lr_ = plateau_d_.lr() * sched.d_lr_factor;
    set_adam_lr(*opt_d_, last_d_lr_);
    opt_d_->step();
    emit("discriminator/adversarial_loss", d_val);
    emit("discriminator/D(y)_prob",
         torch::sigmoid(real_logits).mean().item<double>());
    emit("discriminator/D(G(x))_prob",
         torch::sigmoid(fake_logits).mean().item<double>());
  } else {
    last_d_lr_ = 0.0;
    if (adversarial_phase) {
      // holdback window: critic frozen but its read-only diagnostics stay up
      torch::NoGradGuard ng;
      auto real_logits = critic_->forward(batch.hr);
      auto fake_logits = critic_->forward(fake.detach());
      emit("discriminator/adversarial_loss",
           adversarial_d_loss(real_logits, fake_logits, cfg_.train.label_smoothing)
               .item<double>());
      emit("discriminator/D(y)_prob",
           torch::sigmoid(real_logits).mean().item<double>());
      emit("discriminator/D(G(x))_prob",
           torch::sigmoid(fake_logits).mean().item<double>());
    }
  }

  // ---- generator update --------------------------------------------------
  std::optional<torch::Tensor> fake_logits_g;
  if (sched.adv_weight > 0.0) {
    fake_logits_g = critic_->forward(fake);
  }
  auto breakdown = compose_g_objective(fake, batch.hr, fake_logits_g,
                                       cfg_.losses, sched.adv_weight,
                                       perceptual_.get());
  finite_or_throw(breakdown.l1, "L1");
  finite_or_throw(breakdown.sam, "SAM");
  finite_or_throw(breakdown.perceptual, "perceptual");
  finite_or_throw(breakdown.tv, "TV");
  finite_or_throw(breakdown.adversarial, "adversarial (G)");
  const double g_content =
      finite_or_throw(breakdown.content.item<double>(), "generator/content_loss");
  const double g_total =
      finite_or_throw(breakdown.total.item<double>(), "generator/total_loss");

  opt_g_->zero_grad();
  breakdown.total.backward();
  if (cfg_.train.gradient_clip_val > 0.0) {
    torch::nn::utils::clip_grad_norm_(gen_->parameters(),
                                      cfg_.train.gradient_clip_val);
  }
  last_g_lr_ = plateau_g_.lr() * sched.g_lr_factor;
  set_adam_lr(*opt_g_, last_g_lr_);
  opt_g_->step();
  if (cfg_.train.ema_enabled) {
    ema_.update(*gen_);
  }
  emit("generator/content_loss", g_content);
  emit("generator/total_loss", g_total);
  emit("training/g_lr", last_g_lr_);
  emit("training/d_lr", last_d_lr_);

  ++step_;
  return recs;
}

std::vector<MetricRecord> Trainer::validation_pass() {
  if (val_data_ == nullptr || val_data_->val_samples().empty()) {
    throw std::runtime_error("validation set is empty");
  }
  const bool use_ema = cfg_.train.ema_enabled && ema_.initialized();
  if (use_ema) ema_.swap_in(*gen_);

  double psnr_sum = 0, ssim_sum = 0, sam_sum = 0, perc_sum = 0;
  double content_sum = 0, d_loss_sum = 0;
  const auto& samples = val_data_->val_samples();
  {
    const bool was_training = gen_->is_training();
    gen_->eval();
    critic_->eval();
    torch::NoGradGuard ng;
    std::optional<torch::Tensor> latent;
    if (cfg_.model.model_type == ModelType::kCgan) {
      // fixed validation latent: metric comparability across evaluations
      latent = gen_->sample_noise(1, cfg_.train.seed ^ 0x76616cULL);
    }
    for (const auto& s : samples) {
      auto sr = gen_->forward_with_noise(s.lr.unsqueeze(0), latent, false)
                    .image.squeeze(0);
      auto m = sample_metrics(sr, s.hr, perceptual_.get());
      psnr_sum += m.psnr_db;
      ssim_sum += m.ssim;
      sam_sum += m.sam_rad;
      perc_sum += m.perceptual;
      auto breakdown =
          compose_g_objective(sr.unsqueeze(0), s.hr.unsqueeze(0), std::nullopt,
                              cfg_.losses, 0.0, perceptual_.get());
      content_sum += breakdown.content.item<double>();
      auto real_logits = critic_->forward(s.hr.unsqueeze(0));
      auto fake_logits = critic_->forward(sr.unsqueeze(0));
      d_loss_sum += adversarial_d_loss(real_logits, fake_logits,
                                       cfg_.train.label_smoothing)
                        .item<double>();
    }
    if (was_training) {
      gen_->train();
      critic_->train();
    }
  }
  if (use_ema) ema_.swap_out(*gen_);

  const auto n = static_cast<double>(samples.size());
  std::vector<MetricRecord> recs;
  auto emit = [&](const std::string& name, double value) {
    recs.push_back(MetricRecord{step_, name, value});
  };
  emit("validation/PSNR", psnr_sum / n);
  emit("validation/SSIM", ssim_sum / n);
  emit("validation/SAM", sam_sum / n);
  if (perceptual_ != nullptr) {
    emit("validation/perceptual", perc_sum / n);
  }
  emit("validation/DISC_adversarial_loss", d_loss_sum / n);
  emit("validation/content_total", content_sum / n);

  plateau_g_.observe(content_sum / n);
  plateau_d_.observe(d_loss_sum / n);
  return recs;
}

TrainerPaths Trainer::fit() {
  if (train_data_ == nullptr) {
    throw std::runtime_error("fit: no training dataset configured");
  }
  TrainerPaths paths;
  paths.out_dir = cfg_.logging.out_dir;
  fs::create_directories(paths.out_dir);
  paths.metrics = paths.out_dir / cfg_.logging.metrics_file;
  paths.last_checkpoint = paths.out_dir / "last.ckpt";
  paths.best_checkpoint = paths.out_dir / "best.ckpt";

  // the trainer owns the JSONL metric stream; callers add extra sinks only
  if (!fit_sink_attached_) {
    sinks_.push_back(std::make_shared<JsonlSink>(paths.metrics.string()));
    fit_sink_attached_ = true;
  }

  const auto total = total_steps();
  while (step_ < total) {
    auto batch = train_data_->train_batch(step_, cfg_.data.batch_size);
    dispatch(train_step(batch));
    const bool at_end = step_ == total;
    if ((cfg_.train.val_interval > 0 && step_ % cfg_.train.val_interval == 0) ||
        at_end) {
      auto vrecs = validation_pass();
      dispatch(vrecs);
      double val_psnr = 0;
      for (const auto& r : vrecs) {
        if (r.name == "validation/PSNR") val_psnr = r.value;
      }
      save_checkpoint(paths.last_checkpoint.string());
      if (!has_best_ || val_psnr > best_psnr_) {
        best_psnr_ = val_psnr;
        has_best_ = true;
        save_checkpoint(paths.best_checkpoint.string());
      }
    }
  }
  for (auto& s : sinks_) s->flush();
  return paths;
}

void Trainer::save_checkpoint(const std::string& path) const {
  TensorFile file;
  file.meta["format"] = "gansr-checkpoint";
  file.meta["version"] = 1;
  file.meta["step"] = step_;
  file.meta["fingerprint"] = model_fingerprint(cfg_.model);
  file.meta["config"] = serialize_config(cfg_);
  file.meta["ema"] = {{"enabled", cfg_.train.ema_enabled},
                      {"decay", ema_.decay()},
                      {"updates", ema_.updates_applied()}};
  file.meta["plateau_g"] = plateau_g_.state();
  file.meta["plateau_d"] = plateau_d_.state();
  file.meta["best_psnr"] = best_psnr_;
  file.meta["has_best"] = has_best_;

  for (auto& [name, t] : named_state(*gen_)) {
    file.tensors.emplace_back("gen/" + name, t);
  }
  for (auto& [name, t] : named_state(*critic_)) {
    file.tensors.emplace_back("disc/" + name, t);
  }
  if (ema_.initialized()) {
    for (auto& [name, t] : ema_.export_shadow()) {
      file.tensors.emplace_back("ema/" + name, t);
    }
  }
  file.tensors.emplace_back("optim/g", optimizer_bytes(*opt_g_));
  file.tensors.emplace_back("optim/d", optimizer_bytes(*opt_d_));
  file.tensors.emplace_back("rng/torch",
                            at::detail::getDefaultCPUGenerator().get_state());

  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_tensor_file(path, file);
}

void Trainer::resume_from(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  if (file.meta.value("format", "") != "gansr-checkpoint") {
    throw std::runtime_error(path + " is not a gansr checkpoint");
  }
  const auto fp = file.meta.value("fingerprint", "");
  if (fp != model_fingerprint(cfg_.model)) {
    throw std::runtime_error(
        "checkpoint architecture fingerprint " + fp +
        " does not match the configured model " +
        model_fingerprint(cfg_.model) +
        " (generator settings changed since the checkpoint was written)");
  }
  load_named_state(*gen_, with_prefix_stripped(file, "gen/"));
  load_named_state(*critic_, with_prefix_stripped(file, "disc/"));
  optimizer_from_bytes(*opt_g_, file.require("optim/g"));
  optimizer_from_bytes(*opt_d_, file.require("optim/d"));

  const auto ema_meta = file.meta.value("ema", nlohmann::json::object());
  auto shadow = with_prefix_stripped(file, "ema/");
  if (cfg_.train.ema_enabled) {
    if (shadow.empty()) {
      throw std::runtime_error(
          "checkpoint has no EMA shadow but Training.EMA.enabled is true");
    }
    ema_ = Ema::restore(cfg_.train.ema_decay,
                        ema_meta.value("updates", std::int64_t{0}),
                        std::move(shadow));
  }
  plateau_g_.restore(file.meta.at("plateau_g"));
  plateau_d_.restore(file.meta.at("plateau_d"));
  step_ = file.meta.value("step", std::int64_t{0});
  best_psnr_ = file.meta.value("best_psnr", 0.0);
  has_best_ = file.meta.value("has_best", false);
  if (const auto* rng = file.find("rng/torch")) {
    auto cpu_rng = at::detail::getDefaultCPUGenerator();  // shared impl
    cpu_rng.set_state(*rng);
  }
}

LoadedGenerator load_generator_from_checkpoint(const std::string& path,
                                               const Config& cfg,
                                               bool prefer_ema) {
  TensorFile file = load_tensor_file(path);
  if (file.meta.value("format", "") != "gansr-checkpoint") {
    throw std::runtime_error(path + " is not a gansr checkpoint");
  }
  const auto fp = file.meta.value("fingerprint", "");
  if (fp != model_fingerprint(cfg.model)) {
    throw std::runtime_error(
        "checkpoint architecture fingerprint " + fp +
        " does not match the configured model " + model_fingerprint(cfg.model));
  }
  LoadedGenerator out;
  out.gen = build_generator(cfg.model);
  out.step = file.meta.value("step", std::int64_t{0});
  load_named_state(*out.gen, with_prefix_stripped(file, "gen/"));
  auto shadow = with_prefix_stripped(file, "ema/");
  if (prefer_ema && !shadow.empty()) {
    // inference runs the EMA-stabilized parameters
    torch::NoGradGuard ng;
    auto params = out.gen->named_parameters(/*recurse=*/true);
    for (const auto& [name, t] : shadow) {
      auto* p = params.find(name);
      if (p == nullptr || !p->sizes().equals(t.sizes())) {
        throw std::runtime_error("checkpoint EMA tensor '" + name +
                                 "' does not match the generator");
      }
      p->copy_(t);
    }
    out.used_ema = true;
  }
  out.gen->eval();
  return out;
}

}  // namespace gansr
