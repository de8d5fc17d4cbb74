#include "gansr/perceptual.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>

#include "gansr/checkpoint.hpp"

namespace gansr {

namespace {

// Conv output-channel sequences of the torchvision VGG feature stacks.
// Pool positions are the conv indices after whose activation a 2x2 max-pool
// runs; taps are the conv indices whose activation is compared (lpips).
struct VggLayout {
  std::vector<int> widths;
  std::vector<int> pools_after;
  std::vector<int> taps;
};

const VggLayout& vgg19_layout() {
  static const VggLayout layout{
      {64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512, 512, 512, 512, 512,
       512},
      {1, 3, 7, 11},
      {}};
  return layout;
}

const VggLayout& vgg16_layout() {
  static const VggLayout layout{
      {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512},
      {1, 3, 6, 9},
      {1, 3, 6, 9, 12}};
  return layout;
}

bool pool_after(const VggLayout& layout, int conv_idx) {
  for (int p : layout.pools_after) {
    if (p == conv_idx) return true;
  }
  return false;
}

std::string kind_name(PerceptualKind kind) {
  return kind == PerceptualKind::kVgg19 ? "vgg19" : "lpips";
}

class VggBackendBase : public PerceptualBackend {
 public:
  VggBackendBase(PerceptualKind kind, std::array<int, 3> rgb)
      : PerceptualBackend(kind), rgb_(rgb) {}

 protected:
  torch::Tensor to_rgb(const torch::Tensor& x) const {
    if (x.dim() != 4) {
      throw std::invalid_argument(
          "perceptual: expected (batch, bands, h, w) input, got " +
          std::to_string(x.dim()) + "-d tensor");
    }
    const auto bands = x.size(1);
    if (bands == 3 && rgb_ == std::array<int, 3>{0, 1, 2}) {
      return x;
    }
    if (bands == 1) {
      return x.repeat({1, 3, 1, 1});
    }
    for (int idx : rgb_) {
      if (idx < 0 || idx >= bands) {
        throw std::invalid_argument(
            "perceptual: rgb band index " + std::to_string(idx) +
            " out of range for " + std::to_string(bands) + "-band input");
      }
    }
    auto sel = torch::tensor(
        {static_cast<std::int64_t>(rgb_[0]), static_cast<std::int64_t>(rgb_[1]),
         static_cast<std::int64_t>(rgb_[2])},
        torch::kInt64);
    return x.index_select(1, sel);
  }

  void take_weights(const TensorFile& file, const VggLayout& layout,
                    int extra_lins) {
    const auto schema = perceptual_weight_schema(kind_);
    for (const auto& [name, shape] : schema) {
      const auto* t = file.find(name);
      if (t == nullptr) {
        throw std::runtime_error("perceptual weights: missing tensor '" + name +
                                 "'");
      }
      if (t->sizes() != torch::IntArrayRef(shape)) {
        throw std::runtime_error("perceptual weights: tensor '" + name +
                                 "' has shape " + c10::str(t->sizes()) +
                                 ", expected " + c10::str(torch::IntArrayRef(shape)));
      }
    }
    const int n_convs = static_cast<int>(layout.widths.size());
    for (int i = 0; i < n_convs; ++i) {
      conv_w_.push_back(
          file.require("conv" + std::to_string(i) + ".weight").to(torch::kFloat32));
      conv_b_.push_back(
          file.require("conv" + std::to_string(i) + ".bias").to(torch::kFloat32));
    }
    for (int i = 0; i < extra_lins; ++i) {
      lin_w_.push_back(
          file.require("lin" + std::to_string(i) + ".weight").to(torch::kFloat32));
    }
  }

  std::array<int, 3> rgb_;
  std::vector<torch::Tensor> conv_w_, conv_b_;
  std::vector<torch::Tensor> lin_w_;
};

class Vgg19Backend final : public VggBackendBase {
 public:
  Vgg19Backend(const TensorFile& file, std::array<int, 3> rgb)
      : VggBackendBase(PerceptualKind::kVgg19, rgb) {
    take_weights(file, vgg19_layout(), 0);
  }

  torch::Tensor distance(const torch::Tensor& pred,
                         const torch::Tensor& target) override {
    auto fp = extract(to_rgb(pred));
    torch::Tensor ft;
    {
      torch::NoGradGuard ng;
      ft = extract(to_rgb(target.detach()));
    }
    return torch::l1_loss(fp, ft);
  }

 private:
  // conv5_4 pre-activation features of an ImageNet-normalized RGB batch
  torch::Tensor extract(const torch::Tensor& rgb) const {
    static const auto mean =
        torch::tensor({0.485, 0.456, 0.406}, torch::kFloat32).view({1, 3, 1, 1});
    static const auto stdev =
        torch::tensor({0.229, 0.224, 0.225}, torch::kFloat32).view({1, 3, 1, 1});
    auto h = (rgb - mean) / stdev;
    const auto& layout = vgg19_layout();
    const int last = static_cast<int>(layout.widths.size()) - 1;
    for (int i = 0; i <= last; ++i) {
      h = torch::conv2d(h, conv_w_[i], conv_b_[i], 1, 1);
      if (i == last) break;  // pre-activation output of the final conv
      h = torch::relu(h);
      if (pool_after(layout, i)) {
        h = torch::max_pool2d(h, 2, 2);
      }
    }
    return h;
  }
};

class LpipsBackend final : public VggBackendBase {
 public:
  LpipsBackend(const TensorFile& file, std::array<int, 3> rgb)
      : VggBackendBase(PerceptualKind::kLpips, rgb) {
    take_weights(file, vgg16_layout(), 5);
  }

  torch::Tensor distance(const torch::Tensor& pred,
                         const torch::Tensor& target) override {
    auto fp = taps(to_rgb(pred));
    std::vector<torch::Tensor> ft;
    {
      torch::NoGradGuard ng;
      ft = taps(to_rgb(target.detach()));
    }
    torch::Tensor total;
    for (size_t k = 0; k < fp.size(); ++k) {
      auto diff = (unit_normalize(fp[k]) - unit_normalize(ft[k])).pow(2);
      auto weighted = torch::conv2d(diff, lin_w_[k]);  // (B,1,H,W)
      auto layer = weighted.mean({2, 3}).squeeze(1);   // (B,)
      total = total.defined() ? total + layer : layer;
    }
    return total.mean();
  }

 private:
  static torch::Tensor unit_normalize(const torch::Tensor& f) {
    auto norm = f.pow(2).sum(1, /*keepdim=*/true).sqrt();
    return f / (norm + 1e-10);
  }

  std::vector<torch::Tensor> taps(const torch::Tensor& rgb) const {
    static const auto shift =
        torch::tensor({-0.030, -0.088, -0.188}, torch::kFloat32)
            .view({1, 3, 1, 1});
    static const auto scale =
        torch::tensor({0.458, 0.448, 0.450}, torch::kFloat32).view({1, 3, 1, 1});
    auto h = (rgb * 2.0 - 1.0 - shift) / scale;
    const auto& layout = vgg16_layout();
    std::vector<torch::Tensor> out;
    for (int i = 0; i < static_cast<int>(layout.widths.size()); ++i) {
      h = torch::relu(torch::conv2d(h, conv_w_[i], conv_b_[i], 1, 1));
      for (int tap : layout.taps) {
        if (tap == i) out.push_back(h);
      }
      if (pool_after(layout, i)) {
        h = torch::max_pool2d(h, 2, 2);
      }
    }
    return out;
  }
};

}  // namespace

std::vector<std::pair<std::string, std::vector<std::int64_t>>>
perceptual_weight_schema(PerceptualKind kind) {
  const VggLayout& layout =
      kind == PerceptualKind::kVgg19 ? vgg19_layout() : vgg16_layout();
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> schema;
  int prev = 3;
  for (size_t i = 0; i < layout.widths.size(); ++i) {
    const int w = layout.widths[i];
    schema.emplace_back("conv" + std::to_string(i) + ".weight",
                        std::vector<std::int64_t>{w, prev, 3, 3});
    schema.emplace_back("conv" + std::to_string(i) + ".bias",
                        std::vector<std::int64_t>{w});
    prev = w;
  }
  if (kind == PerceptualKind::kLpips) {
    for (size_t k = 0; k < layout.taps.size(); ++k) {
      const int c = layout.widths[static_cast<size_t>(layout.taps[k])];
      schema.emplace_back("lin" + std::to_string(k) + ".weight",
                          std::vector<std::int64_t>{1, c, 1, 1});
    }
  }
  return schema;
}

std::unique_ptr<PerceptualBackend> PerceptualBackend::load(
    PerceptualKind kind, const std::string& weights_path,
    std::array<int, 3> rgb_triplet) {
  const std::string name = kind_name(kind);
  if (weights_path.empty() || !std::filesystem::exists(weights_path)) {
    throw std::runtime_error(
        "perceptual weights for backend '" + name + "' not found at '" +
        weights_path +
        "'. Export them once with:\n  python3 tools/export_perceptual.py "
        "--backend " + name + " --out " +
        (weights_path.empty() ? std::string("<path>") : weights_path) +
        "\nand point Losses.perceptual_weights at the file.");
  }
  TensorFile file = load_tensor_file(weights_path);
  const auto stored = file.meta.value("backend", std::string());
  if (stored != name) {
    throw std::runtime_error("perceptual weights at '" + weights_path +
                             "' were exported for backend '" + stored +
                             "', expected '" + name + "'");
  }
  if (kind == PerceptualKind::kVgg19) {
    return std::make_unique<Vgg19Backend>(file, rgb_triplet);
  }
  return std::make_unique<LpipsBackend>(file, rgb_triplet);
}

}  // namespace gansr
