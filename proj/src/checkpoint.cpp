#include "gansr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gansr {
namespace {

constexpr char kMagic[4] = {'G', 'S', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kInt32: return "i32";
    case torch::kUInt8: return "u8";
    default: throw std::runtime_error("tensor file: unsupported dtype");
  }
}

torch::ScalarType tag_dtype(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  if (tag == "i32") return torch::kInt32;
  if (tag == "u8") return torch::kUInt8;
  throw std::runtime_error("tensor file: unknown dtype tag '" + tag + "'");
}

}  // namespace

const torch::Tensor* TensorFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

torch::Tensor TensorFile::require(const std::string& name) const {
  const torch::Tensor* t = find(name);
  if (!t) throw std::runtime_error("tensor file: missing tensor '" + name + "'");
  return *t;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
  nlohmann::json header;
  header["meta"] = file.meta;
  auto& list = header["tensors"] = nlohmann::json::array();

  std::vector<torch::Tensor> flat;
  flat.reserve(file.tensors.size());
  std::uint64_t offset = 0;
  for (const auto& [name, t] : file.tensors) {
    torch::Tensor c = t.detach().cpu().contiguous();
    const std::uint64_t bytes = c.numel() * c.element_size();
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = dtype_tag(c.scalar_type());
    entry["shape"] = std::vector<std::int64_t>(c.sizes().begin(), c.sizes().end());
    entry["offset"] = offset;
    entry["bytes"] = bytes;
    list.push_back(std::move(entry));
    flat.push_back(std::move(c));
    offset += bytes;
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("tensor file: cannot open for write: " + path);
  out.write(kMagic, 4);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(hlen));
  for (const auto& t : flat)
    out.write(static_cast<const char*>(t.const_data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
  if (!out) throw std::runtime_error("tensor file: write failed: " + path);
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("tensor file: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("tensor file: bad magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    throw std::runtime_error("tensor file: unsupported version in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("tensor file: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(header_str);
  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  const std::streampos data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name");
    const torch::ScalarType dtype = tag_dtype(entry.at("dtype"));
    std::vector<std::int64_t> shape = entry.at("shape");
    const std::uint64_t offset = entry.at("offset");
    const std::uint64_t bytes = entry.at("bytes");
    torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != bytes)
      throw std::runtime_error("tensor file: size mismatch for '" + name + "'");
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("tensor file: truncated data for '" + name + "'");
    file.tensors.emplace_back(name, std::move(t));
  }
  return file;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(
    const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters(/*recurse=*/true))
    out.emplace_back(p.key(), p.value().detach().cpu().clone());
  for (const auto& b : m.named_buffers(/*recurse=*/true))
    out.emplace_back(b.key(), b.value().detach().cpu().clone());
  return out;
}

void load_named_state(torch::nn::Module& m,
                      const std::vector<std::pair<std::string, torch::Tensor>>& state) {
  std::map<std::string, torch::Tensor> lookup(state.begin(), state.end());
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor dst) {
    auto it = lookup.find(name);
    if (it == lookup.end())
      throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (it->second.sizes() != dst.sizes())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    dst.copy_(it->second);
    lookup.erase(it);
  };
  for (const auto& p : m.named_parameters(true)) copy_into(p.key(), p.value());
  for (const auto& b : m.named_buffers(true)) copy_into(b.key(), b.value());
  if (!lookup.empty())
    throw std::runtime_error("checkpoint: unexpected tensor '" + lookup.begin()->first +
                             "' for this architecture");
}

}  // namespace gansr
