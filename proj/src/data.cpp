#include "gansr/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gansr/geotiff.hpp"

namespace fs = std::filesystem;

namespace gansr {

namespace {

// SplitMix64 finalizer: decorrelates (seed, step, slot) into an RNG stream.
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

torch::Tensor apply_dihedral(const torch::Tensor& t, int rot_k, bool hflip,
                             bool vflip) {
  auto out = t;
  if (hflip) out = out.flip(-1);
  if (vflip) out = out.flip(-2);
  if (rot_k % 4 != 0) out = torch::rot90(out, rot_k % 4, {-2, -1});
  return out.contiguous();
}

std::vector<fs::path> list_tiffs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".tif" || ext == ".tiff") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Optional manifest.json: {"bands": [...], "scenes"/"pairs": [stems]}.
// When present, its band order must match the config and its listing
// restricts which files are used.
std::vector<std::string> read_manifest(const fs::path& dir,
                                       const DataConfig& cfg) {
  const auto mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) return {};
  std::ifstream in(mpath);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset: " + mpath.string() +
                             ": malformed manifest: " + e.what());
  }
  if (j.contains("bands")) {
    const auto listed = j.at("bands").get<std::vector<std::string>>();
    if (listed != cfg.bands) {
      throw std::runtime_error(
          "dataset: " + mpath.string() +
          ": manifest band order does not match Data.bands in the config");
    }
  }
  std::vector<std::string> stems;
  for (const char* key : {"scenes", "pairs"}) {
    if (j.contains(key)) {
      stems = j.at(key).get<std::vector<std::string>>();
    }
  }
  return stems;
}

}  // namespace

torch::Tensor degrade(const torch::Tensor& hr, int scale) {
  if (scale < 1) {
    throw std::invalid_argument("degrade: scale must be >= 1");
  }
  const bool batched = hr.dim() == 4;
  if (!batched && hr.dim() != 3) {
    throw std::invalid_argument(
        "degrade: expected (bands, h, w) or (batch, bands, h, w)");
  }
  const auto h = hr.size(-2);
  const auto w = hr.size(-1);
  if (h % scale != 0 || w % scale != 0) {
    throw std::invalid_argument("degrade: dims " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by scale " +
                                std::to_string(scale));
  }
  auto x = batched ? hr : hr.unsqueeze(0);
  auto out = torch::avg_pool2d(x, scale, scale);
  return batched ? out : out.squeeze(0);
}

torch::Tensor normalize(const torch::Tensor& raw, const DataConfig& cfg) {
  switch (cfg.norm_kind) {
    case NormalizationKind::kReflectanceScale: {
      auto refl = raw / 10000.0;
      return refl.clamp(0.0, cfg.max_reflectance) / cfg.max_reflectance;
    }
    case NormalizationKind::kMinMax: {
      const double range = cfg.minmax_max - cfg.minmax_min;
      if (range <= 0.0) {
        throw std::invalid_argument(
            "normalize: minmax range is zero (min == max)");
      }
      return (raw - cfg.minmax_min) / range;
    }
    case NormalizationKind::kZScore: {
      if (cfg.zscore_std <= 0.0) {
        throw std::invalid_argument("normalize: zscore std must be > 0");
      }
      return (raw - cfg.zscore_mean) / cfg.zscore_std;
    }
  }
  throw std::logic_error("normalize: unreachable");
}

torch::Tensor denormalize(const torch::Tensor& norm, const DataConfig& cfg) {
  switch (cfg.norm_kind) {
    case NormalizationKind::kReflectanceScale:
      return norm * cfg.max_reflectance * 10000.0;
    case NormalizationKind::kMinMax:
      return norm * (cfg.minmax_max - cfg.minmax_min) + cfg.minmax_min;
    case NormalizationKind::kZScore:
      return norm * cfg.zscore_std + cfg.zscore_mean;
  }
  throw std::logic_error("denormalize: unreachable");
}

Dataset::Dataset(const DataConfig& cfg, std::string split, std::uint64_t seed)
    : cfg_(cfg), split_(std::move(split)), seed_(seed) {
  if (split_ != "train" && split_ != "val") {
    throw std::invalid_argument("dataset: split must be 'train' or 'val'");
  }
  bands_ = static_cast<int>(cfg_.bands.size());
  const std::string dir = split_ == "train" ? cfg_.train_dir : cfg_.val_dir;
  if (!fs::exists(dir)) {
    throw std::runtime_error("dataset: directory '" + dir + "' does not exist");
  }
  if (cfg_.source == DataSource::kSyntheticDegradation) {
    load_synthetic(dir);
  } else {
    load_paired(dir);
  }
  if (hr_.empty()) {
    throw std::runtime_error("dataset: no usable scenes in '" + dir + "'");
  }
  if (split_ == "val") {
    build_val_grid();
  }
}

std::shared_ptr<Dataset> Dataset::make(const DataConfig& cfg,
                                       const std::string& split,
                                       std::uint64_t seed) {
  return std::shared_ptr<Dataset>(new Dataset(cfg, split, seed));
}

void Dataset::load_synthetic(const std::string& dir) {
  auto stems = read_manifest(dir, cfg_);
  auto files = list_tiffs(dir);
  if (!stems.empty()) {
    std::vector<fs::path> picked;
    for (const auto& s : stems) {
      const auto p = fs::path(dir) / (s + ".tif");
      if (!fs::exists(p)) {
        throw std::runtime_error("dataset: manifest lists scene '" + s +
                                 "' but " + p.string() + " is missing");
      }
      picked.push_back(p);
    }
    files = std::move(picked);
  }
  for (const auto& f : files) {
    auto img = read_geotiff(f.string());
    if (img.data.size(0) != bands_) {
      throw std::runtime_error("dataset: " + f.string() + " has " +
                               std::to_string(img.data.size(0)) +
                               " bands, config expects " +
                               std::to_string(bands_));
    }
    const auto h = img.data.size(1);
    const auto w = img.data.size(2);
    if (h % cfg_.scale != 0 || w % cfg_.scale != 0) {
      throw std::runtime_error("dataset: " + f.string() + " dims " +
                               std::to_string(h) + "x" + std::to_string(w) +
                               " not divisible by scale " +
                               std::to_string(cfg_.scale));
    }
    if (h < cfg_.patch_size_hr || w < cfg_.patch_size_hr) {
      throw std::runtime_error("dataset: " + f.string() +
                               " is smaller than patch_size_hr " +
                               std::to_string(cfg_.patch_size_hr));
    }
    hr_.push_back(normalize(img.data, cfg_).to(torch::kFloat32).contiguous());
    scene_names_.push_back(f.stem().string());
  }
}

void Dataset::load_paired(const std::string& dir) {
  const auto lr_dir = fs::path(dir) / "lr";
  const auto hr_dir = fs::path(dir) / "hr";
  if (!fs::exists(lr_dir) || !fs::exists(hr_dir)) {
    throw std::runtime_error("dataset: paired_dirs source expects '" + dir +
                             "/lr' and '" + dir + "/hr' subdirectories");
  }
  auto stems = read_manifest(dir, cfg_);
  std::vector<std::string> use;
  if (!stems.empty()) {
    use = stems;
  } else {
    for (const auto& f : list_tiffs(hr_dir)) {
      use.push_back(f.stem().string());
    }
  }
  for (const auto& stem : use) {
    const auto hp = hr_dir / (stem + ".tif");
    const auto lp = lr_dir / (stem + ".tif");
    if (!fs::exists(hp)) {
      throw std::runtime_error("dataset: missing HR file " + hp.string());
    }
    if (!fs::exists(lp)) {
      throw std::runtime_error("dataset: HR scene '" + stem +
                               "' has no LR pair at " + lp.string());
    }
    auto hi = read_geotiff(hp.string());
    auto li = read_geotiff(lp.string());
    if (hi.data.size(0) != bands_ || li.data.size(0) != bands_) {
      throw std::runtime_error("dataset: band-count mismatch for pair '" +
                               stem + "' (config expects " +
                               std::to_string(bands_) + ")");
    }
    if (hi.data.size(1) != li.data.size(1) * cfg_.scale ||
        hi.data.size(2) != li.data.size(2) * cfg_.scale) {
      throw std::runtime_error(
          "dataset: " + hp.string() + " is not exactly " +
          std::to_string(cfg_.scale) + "x the size of " + lp.string());
    }
    if (hi.data.size(1) < cfg_.patch_size_hr ||
        hi.data.size(2) < cfg_.patch_size_hr) {
      throw std::runtime_error("dataset: " + hp.string() +
                               " is smaller than patch_size_hr " +
                               std::to_string(cfg_.patch_size_hr));
    }
    hr_.push_back(normalize(hi.data, cfg_).to(torch::kFloat32).contiguous());
    lr_.push_back(normalize(li.data, cfg_).to(torch::kFloat32).contiguous());
    scene_names_.push_back(stem);
  }
}

PairSample Dataset::train_sample(std::int64_t step, std::int64_t slot) const {
  std::mt19937_64 rng(mix(mix(seed_, static_cast<std::uint64_t>(step)),
                          static_cast<std::uint64_t>(slot)));
  const auto scene =
      static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hr_.size()));
  const auto& hr = hr_[static_cast<std::size_t>(scene)];
  const int patch = cfg_.patch_size_hr;
  const int scale = cfg_.scale;
  const auto max_y = (hr.size(1) - patch) / scale;
  const auto max_x = (hr.size(2) - patch) / scale;
  std::uniform_int_distribution<std::int64_t> dy(0, max_y);
  std::uniform_int_distribution<std::int64_t> dx(0, max_x);
  const auto y0 = dy(rng) * scale;  // scale-aligned so LR crops stay integral
  const auto x0 = dx(rng) * scale;
  const int rot_k = cfg_.aug_rot90 ? static_cast<int>(rng() % 4) : 0;
  const bool hflip = cfg_.aug_flips && (rng() % 2 == 1);
  const bool vflip = cfg_.aug_flips && (rng() % 2 == 1);

  PairSample s;
  auto hr_crop = hr.narrow(1, y0, patch).narrow(2, x0, patch);
  s.hr = apply_dihedral(hr_crop, rot_k, hflip, vflip);
  if (cfg_.source == DataSource::kSyntheticDegradation) {
    s.lr = degrade(s.hr, scale);
  } else {
    const auto& lr = lr_[static_cast<std::size_t>(scene)];
    auto lr_crop =
        lr.narrow(1, y0 / scale, patch / scale).narrow(2, x0 / scale, patch / scale);
    s.lr = apply_dihedral(lr_crop, rot_k, hflip, vflip);
  }
  return s;
}

Batch Dataset::train_batch(std::int64_t step, int batch_size) const {
  std::vector<torch::Tensor> lrs, hrs;
  lrs.reserve(static_cast<std::size_t>(batch_size));
  hrs.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    auto s = train_sample(step, i);
    lrs.push_back(s.lr);
    hrs.push_back(s.hr);
  }
  return Batch{torch::stack(lrs, 0), torch::stack(hrs, 0)};
}

void Dataset::build_val_grid() {
  const int patch = cfg_.patch_size_hr;
  for (std::size_t i = 0; i < hr_.size(); ++i) {
    const auto& hr = hr_[i];
    for (std::int64_t y = 0; y + patch <= hr.size(1); y += patch) {
      for (std::int64_t x = 0; x + patch <= hr.size(2); x += patch) {
        PairSample s;
        s.hr = hr.narrow(1, y, patch).narrow(2, x, patch).contiguous();
        if (cfg_.source == DataSource::kSyntheticDegradation) {
          s.lr = degrade(s.hr, cfg_.scale);
        } else {
          const auto& lr = lr_[i];
          const int ps = patch / cfg_.scale;
          s.lr = lr.narrow(1, y / cfg_.scale, ps)
                     .narrow(2, x / cfg_.scale, ps)
                     .contiguous();
        }
        val_.push_back(std::move(s));
      }
    }
  }
}

std::int64_t Dataset::steps_per_epoch(int batch_size) const {
  if (batch_size < 1) {
    throw std::invalid_argument("steps_per_epoch: batch_size must be >= 1");
  }
  // one "epoch" = one crop draw per scene
  return std::max<std::int64_t>(1, num_scenes() / batch_size);
}

}  // namespace gansr
