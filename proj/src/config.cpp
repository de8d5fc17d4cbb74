#include "gansr/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace gansr {
namespace {

using YAML::Node;

// ---------------------------------------------------------------- enums

template <typename E>
struct EnumTable {
  std::vector<std::pair<std::string, E>> entries;

  std::string name(E v) const {
    for (const auto& [s, e] : entries)
      if (e == v) return s;
    return "?";
  }
  E parse(const std::string& s, const std::string& path) const {
    for (const auto& [name, e] : entries)
      if (name == s) return e;
    std::string allowed;
    for (const auto& [name, e] : entries) {
      if (!allowed.empty()) allowed += ", ";
      allowed += name;
    }
    throw ConfigError(path, "invalid value '" + s + "' (allowed: " + allowed + ")");
  }
};

const EnumTable<ModelType> kModelTypes{{{"res", ModelType::kRes},
                                        {"rcab", ModelType::kRcab},
                                        {"rrdb", ModelType::kRrdb},
                                        {"lka", ModelType::kLka},
                                        {"esrgan", ModelType::kEsrgan},
                                        {"cgan", ModelType::kCgan}}};
const EnumTable<DiscType> kDiscTypes{{{"standard", DiscType::kStandard},
                                      {"patchgan", DiscType::kPatchGan},
                                      {"esrgan", DiscType::kEsrgan}}};
const EnumTable<NormKind> kNormKinds{{{"batch", NormKind::kBatch},
                                      {"instance", NormKind::kInstance},
                                      {"none", NormKind::kNone}}};
const EnumTable<WarmupKind> kWarmupKinds{
    {{"linear", WarmupKind::kLinear}, {"cosine", WarmupKind::kCosine}}};
const EnumTable<PerceptualKind> kPerceptualKinds{
    {{"vgg19", PerceptualKind::kVgg19}, {"lpips", PerceptualKind::kLpips}}};
const EnumTable<DataSource> kDataSources{
    {{"paired_dirs", DataSource::kPairedDirs},
     {"synthetic_degradation", DataSource::kSyntheticDegradation}}};
const EnumTable<NormalizationKind> kNormalizationKinds{
    {{"reflectance_scale", NormalizationKind::kReflectanceScale},
     {"minmax", NormalizationKind::kMinMax},
     {"zscore", NormalizationKind::kZScore}}};

// ------------------------------------------------------------- node access

void expect_map(const Node& n, const std::string& path) {
  if (!n.IsMap())
    throw ConfigError(path, "expected a mapping of keys");
}

void reject_unknown_keys(const Node& n, const std::string& path,
                         const std::set<std::string>& allowed) {
  for (const auto& kv : n) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

long get_long(const Node& n, const std::string& path) {
  try {
    if (!n.IsScalar()) throw YAML::BadConversion(n.Mark());
    return n.as<long>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected an integer");
  }
}

int get_int(const Node& n, const std::string& path) {
  return static_cast<int>(get_long(n, path));
}

double get_real(const Node& n, const std::string& path) {
  try {
    if (!n.IsScalar()) throw YAML::BadConversion(n.Mark());
    return n.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected a real number");
  }
}

bool get_bool(const Node& n, const std::string& path) {
  try {
    if (!n.IsScalar()) throw YAML::BadConversion(n.Mark());
    return n.as<bool>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected a boolean (true/false)");
  }
}

std::string get_str(const Node& n, const std::string& path) {
  try {
    if (!n.IsScalar()) throw YAML::BadConversion(n.Mark());
    return n.as<std::string>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "expected a string");
  }
}

std::vector<int> get_int_list(const Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigError(path, "expected a list of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < n.size(); ++i)
    out.push_back(get_int(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string> get_str_list(const Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigError(path, "expected a list of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n.size(); ++i)
    out.push_back(get_str(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// ----------------------------------------------------------- section parsers

void parse_model(const Node& n, ModelConfig& m) {
  expect_map(n, "Model");
  reject_unknown_keys(n, "Model",
                      {"model_type", "in_bands", "out_bands", "scale", "n_blocks",
                       "n_channels", "residual_scale", "noise_dim", "growth_channels"});
  if (n["model_type"])
    m.model_type = kModelTypes.parse(get_str(n["model_type"], "Model.model_type"),
                                     "Model.model_type");
  if (n["in_bands"]) m.in_bands = get_int(n["in_bands"], "Model.in_bands");
  if (n["out_bands"]) m.out_bands = get_int(n["out_bands"], "Model.out_bands");
  if (n["scale"]) m.scale = get_int(n["scale"], "Model.scale");
  if (n["n_blocks"])
    m.n_blocks = get_int(n["n_blocks"], "Model.n_blocks");
  else if (m.model_type == ModelType::kEsrgan)
    m.n_blocks = 23;  // ESRGAN convention when depth is left unset
  if (n["n_channels"]) m.n_channels = get_int(n["n_channels"], "Model.n_channels");
  if (n["residual_scale"])
    m.residual_scale = get_real(n["residual_scale"], "Model.residual_scale");

  const bool is_cgan = m.model_type == ModelType::kCgan;
  const bool is_dense =
      m.model_type == ModelType::kRrdb || m.model_type == ModelType::kEsrgan;
  if (n["noise_dim"]) {
    if (!is_cgan)
      throw ConfigError("Model.noise_dim", "only valid for model_type=cgan");
    m.noise_dim = get_int(n["noise_dim"], "Model.noise_dim");
  } else if (is_cgan) {
    m.noise_dim = 64;
  }
  if (n["growth_channels"]) {
    if (!is_dense)
      throw ConfigError("Model.growth_channels",
                        "only valid for model_type rrdb or esrgan");
    m.growth_channels = get_int(n["growth_channels"], "Model.growth_channels");
  } else if (is_dense) {
    m.growth_channels = 32;
  }
}

void parse_discriminator(const Node& n, DiscriminatorConfig& d) {
  expect_map(n, "Discriminator");
  reject_unknown_keys(n, "Discriminator",
                      {"disc_type", "n_blocks", "base_channels", "linear_size", "norm"});
  if (n["disc_type"])
    d.disc_type = kDiscTypes.parse(get_str(n["disc_type"], "Discriminator.disc_type"),
                                   "Discriminator.disc_type");
  if (n["base_channels"])
    d.base_channels = get_int(n["base_channels"], "Discriminator.base_channels");

  const bool is_patch = d.disc_type == DiscType::kPatchGan;
  // start family-specific fields from scratch so defaults that belong to
  // another critic family never leak through a disc_type change
  d.n_blocks.reset();
  d.linear_size.reset();
  d.norm.reset();
  if (n["n_blocks"]) {
    if (!is_patch)
      throw ConfigError("Discriminator.n_blocks", "only valid for disc_type=patchgan");
    d.n_blocks = get_int(n["n_blocks"], "Discriminator.n_blocks");
  } else if (is_patch) {
    d.n_blocks = 4;
  }
  if (n["linear_size"]) {
    if (is_patch)
      throw ConfigError("Discriminator.linear_size",
                        "only valid for disc_type standard or esrgan");
    d.linear_size = get_int(n["linear_size"], "Discriminator.linear_size");
  } else if (!is_patch) {
    d.linear_size = 1024;
  }
  if (n["norm"]) {
    if (!is_patch)
      throw ConfigError("Discriminator.norm", "only valid for disc_type=patchgan");
    d.norm = kNormKinds.parse(get_str(n["norm"], "Discriminator.norm"),
                              "Discriminator.norm");
  } else if (is_patch) {
    d.norm = NormKind::kInstance;
  }
}

void parse_optimizers(const Node& n, TrainConfig& t) {
  expect_map(n, "Training.Optimizers");
  reject_unknown_keys(n, "Training.Optimizers",
                      {"optim_g_lr", "optim_d_lr", "betas", "eps", "weight_decay",
                       "sched_factor", "sched_patience", "sched_cooldown",
                       "sched_min_lr"});
  if (n["optim_g_lr"])
    t.optim_g_lr = get_real(n["optim_g_lr"], "Training.Optimizers.optim_g_lr");
  if (n["optim_d_lr"])
    t.optim_d_lr = get_real(n["optim_d_lr"], "Training.Optimizers.optim_d_lr");
  if (n["betas"]) {
    const Node& b = n["betas"];
    if (!b.IsSequence() || b.size() != 2)
      throw ConfigError("Training.Optimizers.betas", "expected a pair [beta1, beta2]");
    t.betas = {get_real(b[0], "Training.Optimizers.betas[0]"),
               get_real(b[1], "Training.Optimizers.betas[1]")};
  }
  if (n["eps"]) t.eps = get_real(n["eps"], "Training.Optimizers.eps");
  if (n["weight_decay"])
    t.weight_decay = get_real(n["weight_decay"], "Training.Optimizers.weight_decay");
  if (n["sched_factor"])
    t.sched_factor = get_real(n["sched_factor"], "Training.Optimizers.sched_factor");
  if (n["sched_patience"])
    t.sched_patience = get_int(n["sched_patience"], "Training.Optimizers.sched_patience");
  if (n["sched_cooldown"])
    t.sched_cooldown = get_int(n["sched_cooldown"], "Training.Optimizers.sched_cooldown");
  if (n["sched_min_lr"])
    t.sched_min_lr = get_real(n["sched_min_lr"], "Training.Optimizers.sched_min_lr");
}

void parse_losses(const Node& n, LossConfig& l, TrainConfig& t, bool beta_explicit) {
  expect_map(n, "Training.Losses");
  reject_unknown_keys(n, "Training.Losses",
                      {"w_l1", "w_sam", "w_perceptual", "w_tv", "w_adv",
                       "perceptual_backend", "perceptual_weights"});
  if (n["w_l1"]) l.w_l1 = get_real(n["w_l1"], "Training.Losses.w_l1");
  if (n["w_sam"]) l.w_sam = get_real(n["w_sam"], "Training.Losses.w_sam");
  if (n["w_perceptual"])
    l.w_perceptual = get_real(n["w_perceptual"], "Training.Losses.w_perceptual");
  if (n["w_tv"]) l.w_tv = get_real(n["w_tv"], "Training.Losses.w_tv");
  if (n["w_adv"]) {
    const double w = get_real(n["w_adv"], "Training.Losses.w_adv");
    if (beta_explicit && w != t.adv_loss_beta)
      throw ConfigError("Training.Losses.w_adv",
                        "conflicts with Training.adv_loss_beta (one value, two "
                        "spellings; set either, not both)");
    t.adv_loss_beta = w;
  }
  if (n["perceptual_backend"])
    l.perceptual_backend =
        kPerceptualKinds.parse(get_str(n["perceptual_backend"],
                                       "Training.Losses.perceptual_backend"),
                               "Training.Losses.perceptual_backend");
  if (n["perceptual_weights"])
    l.perceptual_weights =
        get_str(n["perceptual_weights"], "Training.Losses.perceptual_weights");
}

void parse_training(const Node& n, TrainConfig& t, LossConfig& l) {
  expect_map(n, "Training");
  reject_unknown_keys(
      n, "Training",
      {"pretrain_g_only", "g_pretrain_steps", "adversarial_steps",
       "adv_loss_ramp_steps", "adv_loss_beta", "label_smoothing", "g_warmup_steps",
       "g_warmup_type", "d_holdback_steps", "d_holdback_epochs", "gradient_clip_val",
       "precision", "gpus", "seed", "val_interval", "Optimizers", "Losses", "EMA"});
  if (n["pretrain_g_only"])
    t.pretrain_g_only = get_bool(n["pretrain_g_only"], "Training.pretrain_g_only");
  if (n["g_pretrain_steps"])
    t.g_pretrain_steps = get_long(n["g_pretrain_steps"], "Training.g_pretrain_steps");
  if (n["adversarial_steps"])
    t.adversarial_steps = get_long(n["adversarial_steps"], "Training.adversarial_steps");
  if (n["adv_loss_ramp_steps"])
    t.adv_loss_ramp_steps =
        get_long(n["adv_loss_ramp_steps"], "Training.adv_loss_ramp_steps");
  bool beta_explicit = false;
  if (n["adv_loss_beta"]) {
    t.adv_loss_beta = get_real(n["adv_loss_beta"], "Training.adv_loss_beta");
    beta_explicit = true;
  }
  if (n["label_smoothing"])
    t.label_smoothing = get_real(n["label_smoothing"], "Training.label_smoothing");
  if (n["g_warmup_steps"])
    t.g_warmup_steps = get_long(n["g_warmup_steps"], "Training.g_warmup_steps");
  if (n["g_warmup_type"])
    t.g_warmup_type = kWarmupKinds.parse(
        get_str(n["g_warmup_type"], "Training.g_warmup_type"), "Training.g_warmup_type");
  if (n["d_holdback_steps"])
    t.d_holdback_steps = get_long(n["d_holdback_steps"], "Training.d_holdback_steps");
  if (n["d_holdback_epochs"])
    t.d_holdback_epochs = get_long(n["d_holdback_epochs"], "Training.d_holdback_epochs");
  if (n["gradient_clip_val"])
    t.gradient_clip_val = get_real(n["gradient_clip_val"], "Training.gradient_clip_val");
  if (n["precision"]) t.precision = get_int(n["precision"], "Training.precision");
  if (n["gpus"]) {
    auto v = get_int_list(n["gpus"], "Training.gpus");
    t.gpus = v;
  }
  if (n["seed"])
    t.seed = static_cast<unsigned long long>(get_long(n["seed"], "Training.seed"));
  if (n["val_interval"])
    t.val_interval = get_long(n["val_interval"], "Training.val_interval");
  if (n["Optimizers"]) parse_optimizers(n["Optimizers"], t);
  if (n["Losses"]) parse_losses(n["Losses"], l, t, beta_explicit);
  if (n["EMA"]) {
    const Node& e = n["EMA"];
    expect_map(e, "Training.EMA");
    reject_unknown_keys(e, "Training.EMA", {"enabled", "decay"});
    if (e["enabled"]) t.ema_enabled = get_bool(e["enabled"], "Training.EMA.enabled");
    if (e["decay"]) t.ema_decay = get_real(e["decay"], "Training.EMA.decay");
  }
  l.w_adv = t.adv_loss_beta;
}

void parse_data(const Node& n, DataConfig& d) {
  expect_map(n, "Data");
  reject_unknown_keys(n, "Data",
                      {"source", "train_dir", "val_dir", "bands", "rgb_triplet",
                       "scale", "patch_size_hr", "batch_size", "normalization",
                       "augmentation"});
  if (n["source"])
    d.source = kDataSources.parse(get_str(n["source"], "Data.source"), "Data.source");
  if (n["train_dir"]) d.train_dir = get_str(n["train_dir"], "Data.train_dir");
  if (n["val_dir"]) d.val_dir = get_str(n["val_dir"], "Data.val_dir");
  if (n["bands"]) d.bands = get_str_list(n["bands"], "Data.bands");
  if (n["rgb_triplet"]) {
    auto v = get_int_list(n["rgb_triplet"], "Data.rgb_triplet");
    if (v.size() != 3)
      throw ConfigError("Data.rgb_triplet", "expected exactly 3 band indices");
    d.rgb_triplet = {v[0], v[1], v[2]};
  }
  if (n["scale"]) d.scale = get_int(n["scale"], "Data.scale");
  if (n["patch_size_hr"]) d.patch_size_hr = get_int(n["patch_size_hr"], "Data.patch_size_hr");
  if (n["batch_size"]) d.batch_size = get_int(n["batch_size"], "Data.batch_size");
  if (n["normalization"]) {
    const Node& m = n["normalization"];
    expect_map(m, "Data.normalization");
    if (m["kind"])
      d.norm_kind = kNormalizationKinds.parse(get_str(m["kind"], "Data.normalization.kind"),
                                              "Data.normalization.kind");
    std::set<std::string> allowed = {"kind"};
    switch (d.norm_kind) {
      case NormalizationKind::kReflectanceScale: allowed.insert("max_reflectance"); break;
      case NormalizationKind::kMinMax: allowed.insert({"min", "max"}); break;
      case NormalizationKind::kZScore: allowed.insert({"mean", "std"}); break;
    }
    reject_unknown_keys(m, "Data.normalization", allowed);
    if (m["max_reflectance"])
      d.max_reflectance = get_real(m["max_reflectance"], "Data.normalization.max_reflectance");
    if (m["min"]) d.minmax_min = get_real(m["min"], "Data.normalization.min");
    if (m["max"]) d.minmax_max = get_real(m["max"], "Data.normalization.max");
    if (m["mean"]) d.zscore_mean = get_real(m["mean"], "Data.normalization.mean");
    if (m["std"]) d.zscore_std = get_real(m["std"], "Data.normalization.std");
  }
  if (n["augmentation"]) {
    const Node& a = n["augmentation"];
    expect_map(a, "Data.augmentation");
    reject_unknown_keys(a, "Data.augmentation", {"flips", "rot90"});
    if (a["flips"]) d.aug_flips = get_bool(a["flips"], "Data.augmentation.flips");
    if (a["rot90"]) d.aug_rot90 = get_bool(a["rot90"], "Data.augmentation.rot90");
  }
}

void parse_logging(const Node& n, LoggingConfig& lg) {
  expect_map(n, "Logging");
  reject_unknown_keys(n, "Logging", {"out_dir", "metrics_file", "log_interval"});
  if (n["out_dir"]) lg.out_dir = get_str(n["out_dir"], "Logging.out_dir");
  if (n["metrics_file"]) lg.metrics_file = get_str(n["metrics_file"], "Logging.metrics_file");
  if (n["log_interval"]) lg.log_interval = get_long(n["log_interval"], "Logging.log_interval");
}

// ------------------------------------------------------------- overrides

// Descends by copy-constructed child handles only: assigning through a bound
// yaml-cpp Node handle writes the *value* into the tree, so a plain
// `cur = cur[key]` walk would clobber ancestor nodes.
void assign_path(Node target, const std::vector<std::string>& parts,
                 std::size_t idx, const Node& leaf) {
  const std::string& key = parts[idx];
  if (idx + 1 == parts.size()) {
    target[key] = leaf;
    return;
  }
  if (!target[key] || target[key].IsNull())
    target[key] = Node(YAML::NodeType::Map);
  assign_path(target[key], parts, idx + 1, leaf);
}

void apply_override(Node root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("", "override '" + spec + "' is not of the form Key.path=value");
  const std::string dotted = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string piece;
  while (std::getline(ss, piece, '.')) {
    if (piece.empty()) throw ConfigError(dotted, "empty key segment in override");
    parts.push_back(piece);
  }
  Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    parsed = Node(value);
  }
  assign_path(root, parts, 0, parsed);
}

// ------------------------------------------------------------- positivity

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

}  // namespace

std::string to_string(ModelType t) { return kModelTypes.name(t); }
std::string to_string(DiscType t) { return kDiscTypes.name(t); }
std::string to_string(NormKind n) { return kNormKinds.name(n); }
std::string to_string(WarmupKind k) { return kWarmupKinds.name(k); }
std::string to_string(PerceptualKind k) { return kPerceptualKinds.name(k); }
std::string to_string(DataSource s) { return kDataSources.name(s); }
std::string to_string(NormalizationKind k) { return kNormalizationKinds.name(k); }

Config default_config() {
  Config cfg;  // struct defaults are the shipped defaults
  cfg.disc.linear_size = 1024;  // default critic family is non-patch
  cfg.losses.w_adv = cfg.train.adv_loss_beta;
  return cfg;
}

void validate_config(const Config& cfg) {
  const ModelConfig& m = cfg.model;
  require(m.in_bands > 0, "Model.in_bands", "must be a positive integer");
  require(m.out_bands > 0, "Model.out_bands", "must be a positive integer");
  require(m.scale == 2 || m.scale == 4 || m.scale == 8, "Model.scale",
          "must be one of {2, 4, 8}");
  require(m.n_blocks > 0, "Model.n_blocks", "must be a positive integer");
  require(m.n_channels > 0, "Model.n_channels", "must be a positive integer");
  require(m.residual_scale > 0.0 && m.residual_scale <= 1.0, "Model.residual_scale",
          "must lie in (0, 1]");
  const bool is_cgan = m.model_type == ModelType::kCgan;
  const bool is_dense =
      m.model_type == ModelType::kRrdb || m.model_type == ModelType::kEsrgan;
  require(m.noise_dim.has_value() == is_cgan, "Model.noise_dim",
          is_cgan ? "required for model_type=cgan" : "only valid for model_type=cgan");
  if (m.noise_dim)
    require(*m.noise_dim > 0, "Model.noise_dim", "must be a positive integer");
  require(m.growth_channels.has_value() == is_dense, "Model.growth_channels",
          is_dense ? "required for rrdb/esrgan" : "only valid for rrdb/esrgan");
  if (m.growth_channels)
    require(*m.growth_channels > 0, "Model.growth_channels", "must be a positive integer");

  const DiscriminatorConfig& d = cfg.disc;
  require(d.base_channels > 0, "Discriminator.base_channels", "must be a positive integer");
  const bool is_patch = d.disc_type == DiscType::kPatchGan;
  require(d.n_blocks.has_value() == is_patch, "Discriminator.n_blocks",
          is_patch ? "required for patchgan" : "only valid for disc_type=patchgan");
  if (d.n_blocks)
    require(*d.n_blocks >= 2, "Discriminator.n_blocks", "must be an integer >= 2");
  require(d.linear_size.has_value() == !is_patch, "Discriminator.linear_size",
          is_patch ? "only valid for standard/esrgan" : "required for standard/esrgan");
  if (d.linear_size)
    require(*d.linear_size > 0, "Discriminator.linear_size", "must be a positive integer");
  require(d.norm.has_value() == is_patch, "Discriminator.norm",
          is_patch ? "required for patchgan" : "only valid for disc_type=patchgan");

  const TrainConfig& t = cfg.train;
  require(t.g_pretrain_steps >= 0, "Training.g_pretrain_steps", "must be >= 0");
  require(t.adversarial_steps >= 0, "Training.adversarial_steps", "must be >= 0");
  require(t.adv_loss_ramp_steps >= 0, "Training.adv_loss_ramp_steps", "must be >= 0");
  require(t.adv_loss_beta >= 0.0, "Training.adv_loss_beta", "must be >= 0");
  require(t.label_smoothing >= 0.0 && t.label_smoothing < 0.5, "Training.label_smoothing",
          "must lie in [0, 0.5)");
  require(t.g_warmup_steps >= 0, "Training.g_warmup_steps", "must be >= 0");
  require(t.d_holdback_steps >= 0, "Training.d_holdback_steps", "must be >= 0");
  require(t.d_holdback_epochs >= 0, "Training.d_holdback_epochs", "must be >= 0");
  require(!(t.d_holdback_steps > 0 && t.d_holdback_epochs > 0), "Training.d_holdback_epochs",
          "set either d_holdback_steps or d_holdback_epochs, not both");
  require(t.optim_g_lr > 0.0, "Training.Optimizers.optim_g_lr", "must be > 0");
  require(t.optim_d_lr > 0.0, "Training.Optimizers.optim_d_lr", "must be > 0");
  require(t.betas.first >= 0.0 && t.betas.first < 1.0, "Training.Optimizers.betas[0]",
          "must lie in [0, 1)");
  require(t.betas.second >= 0.0 && t.betas.second < 1.0, "Training.Optimizers.betas[1]",
          "must lie in [0, 1)");
  require(t.eps > 0.0, "Training.Optimizers.eps", "must be > 0");
  require(t.weight_decay >= 0.0, "Training.Optimizers.weight_decay", "must be >= 0");
  require(t.sched_factor > 0.0 && t.sched_factor < 1.0, "Training.Optimizers.sched_factor",
          "must lie in (0, 1)");
  require(t.sched_patience >= 0, "Training.Optimizers.sched_patience", "must be >= 0");
  require(t.sched_cooldown >= 0, "Training.Optimizers.sched_cooldown", "must be >= 0");
  require(t.sched_min_lr >= 0.0, "Training.Optimizers.sched_min_lr", "must be >= 0");
  require(t.gradient_clip_val >= 0.0, "Training.gradient_clip_val", "must be >= 0");
  require(t.ema_decay >= 0.0 && t.ema_decay < 1.0, "Training.EMA.decay",
          "must lie in [0, 1)");
  require(t.precision == 16 || t.precision == 32, "Training.precision",
          "must be 16 or 32");
  require(t.val_interval > 0, "Training.val_interval", "must be > 0");
  for (std::size_t i = 0; i < t.gpus.size(); ++i)
    require(t.gpus[i] >= 0, "Training.gpus[" + std::to_string(i) + "]",
            "device index must be >= 0");
  if (t.optim_d_lr > t.optim_g_lr)
    std::cerr << "[config] warning: Training.Optimizers.optim_d_lr > optim_g_lr "
                 "(TTUR convention keeps the discriminator slower)\n";

  const LossConfig& l = cfg.losses;
  require(l.w_l1 >= 0.0, "Training.Losses.w_l1", "must be >= 0");
  require(l.w_sam >= 0.0, "Training.Losses.w_sam", "must be >= 0");
  require(l.w_perceptual >= 0.0, "Training.Losses.w_perceptual", "must be >= 0");
  require(l.w_tv >= 0.0, "Training.Losses.w_tv", "must be >= 0");
  require(l.w_l1 > 0.0 || l.w_sam > 0.0 || l.w_perceptual > 0.0 || l.w_tv > 0.0,
          "Training.Losses", "at least one content weight must be > 0");
  require(l.w_adv == t.adv_loss_beta, "Training.Losses.w_adv",
          "must equal Training.adv_loss_beta (canonicalized on load)");

  const DataConfig& dt = cfg.data;
  require(!dt.bands.empty(), "Data.bands", "must list at least one band");
  require(dt.scale == m.scale, "Data.scale", "must match Model.scale");
  require(dt.patch_size_hr > 0, "Data.patch_size_hr", "must be a positive integer");
  require(dt.patch_size_hr % dt.scale == 0, "Data.patch_size_hr",
          "must be divisible by Data.scale");
  require(dt.batch_size > 0, "Data.batch_size", "must be a positive integer");
  for (int i = 0; i < 3; ++i)
    require(dt.rgb_triplet[i] >= 0 &&
                dt.rgb_triplet[i] < static_cast<int>(dt.bands.size()),
            "Data.rgb_triplet[" + std::to_string(i) + "]",
            "band index out of range for Data.bands");
  require(dt.max_reflectance > 0.0, "Data.normalization.max_reflectance", "must be > 0");
  require(dt.minmax_max > dt.minmax_min, "Data.normalization.max",
          "must exceed Data.normalization.min");
  require(dt.zscore_std > 0.0, "Data.normalization.std", "must be > 0");

  require(cfg.logging.log_interval > 0, "Logging.log_interval", "must be > 0");
}

Config parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("YAML parse error: ") + e.what());
  }
  if (root.IsNull() || !root.IsDefined()) root = Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("", "top level must be a mapping");
  for (const auto& ov : overrides) apply_override(root, ov);

  reject_unknown_keys(root, "", {"Model", "Discriminator", "Training", "Data", "Logging"});

  Config cfg = default_config();
  if (root["Model"]) parse_model(root["Model"], cfg.model);
  if (root["Discriminator"]) parse_discriminator(root["Discriminator"], cfg.disc);
  if (root["Training"]) parse_training(root["Training"], cfg.train, cfg.losses);
  if (root["Data"]) parse_data(root["Data"], cfg.data);
  if (root["Logging"]) parse_logging(root["Logging"], cfg.logging);
  cfg.losses.w_adv = cfg.train.adv_loss_beta;
  validate_config(cfg);
  return cfg;
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string serialize_config(const Config& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "Model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "model_type" << YAML::Value << to_string(cfg.model.model_type);
  out << YAML::Key << "in_bands" << YAML::Value << cfg.model.in_bands;
  out << YAML::Key << "out_bands" << YAML::Value << cfg.model.out_bands;
  out << YAML::Key << "scale" << YAML::Value << cfg.model.scale;
  out << YAML::Key << "n_blocks" << YAML::Value << cfg.model.n_blocks;
  out << YAML::Key << "n_channels" << YAML::Value << cfg.model.n_channels;
  out << YAML::Key << "residual_scale" << YAML::Value << cfg.model.residual_scale;
  if (cfg.model.noise_dim)
    out << YAML::Key << "noise_dim" << YAML::Value << *cfg.model.noise_dim;
  if (cfg.model.growth_channels)
    out << YAML::Key << "growth_channels" << YAML::Value << *cfg.model.growth_channels;
  out << YAML::EndMap;

  out << YAML::Key << "Discriminator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "disc_type" << YAML::Value << to_string(cfg.disc.disc_type);
  out << YAML::Key << "base_channels" << YAML::Value << cfg.disc.base_channels;
  if (cfg.disc.n_blocks) out << YAML::Key << "n_blocks" << YAML::Value << *cfg.disc.n_blocks;
  if (cfg.disc.linear_size)
    out << YAML::Key << "linear_size" << YAML::Value << *cfg.disc.linear_size;
  if (cfg.disc.norm) out << YAML::Key << "norm" << YAML::Value << to_string(*cfg.disc.norm);
  out << YAML::EndMap;

  const TrainConfig& t = cfg.train;
  out << YAML::Key << "Training" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "pretrain_g_only" << YAML::Value << t.pretrain_g_only;
  out << YAML::Key << "g_pretrain_steps" << YAML::Value << t.g_pretrain_steps;
  out << YAML::Key << "adversarial_steps" << YAML::Value << t.adversarial_steps;
  out << YAML::Key << "adv_loss_ramp_steps" << YAML::Value << t.adv_loss_ramp_steps;
  out << YAML::Key << "adv_loss_beta" << YAML::Value << t.adv_loss_beta;
  out << YAML::Key << "label_smoothing" << YAML::Value << t.label_smoothing;
  out << YAML::Key << "g_warmup_steps" << YAML::Value << t.g_warmup_steps;
  out << YAML::Key << "g_warmup_type" << YAML::Value << to_string(t.g_warmup_type);
  out << YAML::Key << "d_holdback_steps" << YAML::Value << t.d_holdback_steps;
  out << YAML::Key << "d_holdback_epochs" << YAML::Value << t.d_holdback_epochs;
  out << YAML::Key << "gradient_clip_val" << YAML::Value << t.gradient_clip_val;
  out << YAML::Key << "precision" << YAML::Value << t.precision;
  out << YAML::Key << "gpus" << YAML::Value << YAML::Flow << t.gpus;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "val_interval" << YAML::Value << t.val_interval;
  out << YAML::Key << "Optimizers" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "optim_g_lr" << YAML::Value << t.optim_g_lr;
  out << YAML::Key << "optim_d_lr" << YAML::Value << t.optim_d_lr;
  out << YAML::Key << "betas" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << t.betas.first << t.betas.second << YAML::EndSeq;
  out << YAML::Key << "eps" << YAML::Value << t.eps;
  out << YAML::Key << "weight_decay" << YAML::Value << t.weight_decay;
  out << YAML::Key << "sched_factor" << YAML::Value << t.sched_factor;
  out << YAML::Key << "sched_patience" << YAML::Value << t.sched_patience;
  out << YAML::Key << "sched_cooldown" << YAML::Value << t.sched_cooldown;
  out << YAML::Key << "sched_min_lr" << YAML::Value << t.sched_min_lr;
  out << YAML::EndMap;
  out << YAML::Key << "Losses" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "w_l1" << YAML::Value << cfg.losses.w_l1;
  out << YAML::Key << "w_sam" << YAML::Value << cfg.losses.w_sam;
  out << YAML::Key << "w_perceptual" << YAML::Value << cfg.losses.w_perceptual;
  out << YAML::Key << "w_tv" << YAML::Value << cfg.losses.w_tv;
  out << YAML::Key << "perceptual_backend" << YAML::Value
      << to_string(cfg.losses.perceptual_backend);
  out << YAML::Key << "perceptual_weights" << YAML::Value << cfg.losses.perceptual_weights;
  out << YAML::EndMap;
  out << YAML::Key << "EMA" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << t.ema_enabled;
  out << YAML::Key << "decay" << YAML::Value << t.ema_decay;
  out << YAML::EndMap;
  out << YAML::EndMap;

  const DataConfig& d = cfg.data;
  out << YAML::Key << "Data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << to_string(d.source);
  out << YAML::Key << "train_dir" << YAML::Value << d.train_dir;
  out << YAML::Key << "val_dir" << YAML::Value << d.val_dir;
  out << YAML::Key << "bands" << YAML::Value << YAML::Flow << d.bands;
  out << YAML::Key << "rgb_triplet" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << d.rgb_triplet[0] << d.rgb_triplet[1] << d.rgb_triplet[2] << YAML::EndSeq;
  out << YAML::Key << "scale" << YAML::Value << d.scale;
  out << YAML::Key << "patch_size_hr" << YAML::Value << d.patch_size_hr;
  out << YAML::Key << "batch_size" << YAML::Value << d.batch_size;
  out << YAML::Key << "normalization" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(d.norm_kind);
  switch (d.norm_kind) {
    case NormalizationKind::kReflectanceScale:
      out << YAML::Key << "max_reflectance" << YAML::Value << d.max_reflectance;
      break;
    case NormalizationKind::kMinMax:
      out << YAML::Key << "min" << YAML::Value << d.minmax_min;
      out << YAML::Key << "max" << YAML::Value << d.minmax_max;
      break;
    case NormalizationKind::kZScore:
      out << YAML::Key << "mean" << YAML::Value << d.zscore_mean;
      out << YAML::Key << "std" << YAML::Value << d.zscore_std;
      break;
  }
  out << YAML::EndMap;
  out << YAML::Key << "augmentation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "flips" << YAML::Value << d.aug_flips;
  out << YAML::Key << "rot90" << YAML::Value << d.aug_rot90;
  out << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "Logging" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "out_dir" << YAML::Value << cfg.logging.out_dir;
  out << YAML::Key << "metrics_file" << YAML::Value << cfg.logging.metrics_file;
  out << YAML::Key << "log_interval" << YAML::Value << cfg.logging.log_interval;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string model_fingerprint(const ModelConfig& m) {
  std::ostringstream canon;
  canon << "model_type=" << to_string(m.model_type) << ";in_bands=" << m.in_bands
        << ";out_bands=" << m.out_bands << ";scale=" << m.scale
        << ";n_blocks=" << m.n_blocks << ";n_channels=" << m.n_channels
        << ";residual_scale=" << m.residual_scale;
  if (m.noise_dim) canon << ";noise_dim=" << *m.noise_dim;
  if (m.growth_channels) canon << ";growth_channels=" << *m.growth_channels;
  // FNV-1a 64-bit
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canon.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

}  // namespace gansr
