#include "mred/common/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mred/common/error.hpp"

namespace mred {
namespace {

constexpr char kMagic[8] = {'M', 'R', 'E', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("checkpoint truncated");
  return v;
}

nlohmann::json read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a checkpoint: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointContainerVersion)
    throw Error("unsupported checkpoint container version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("checkpoint header truncated: " + path);
  return nlohmann::json::parse(text);
}

}  // namespace

void save_checkpoint(const std::string& path, nlohmann::json header,
                     const std::map<std::string, torch::Tensor>& tensors) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::vector<torch::Tensor> payload;
  for (const auto& [name, t] : tensors) {
    auto c = t.detach().to(torch::kFloat32).contiguous().cpu();
    entries.push_back({{"name", name}, {"shape", c.sizes().vec()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(c.numel()) * sizeof(float);
    payload.push_back(c);
  }
  header["tensors"] = entries;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(kMagic, 8);
    write_pod<std::uint32_t>(out, kCheckpointContainerVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& c : payload)
      out.write(reinterpret_cast<const char*>(c.data_ptr<float>()),
                static_cast<std::streamsize>(c.numel() * sizeof(float)));
    if (!out) throw Error("write failed: " + path);
  }
  std::rename(tmp.c_str(), path.c_str());
}

nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return read_header(in, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  Checkpoint ckpt;
  ckpt.header = read_header(in, path);
  const auto base = in.tellg();
  for (const auto& e : ckpt.header.at("tensors")) {
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::kFloat32);
    in.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw Error("checkpoint payload truncated: " + path);
    ckpt.tensors.emplace(e.at("name").get<std::string>(), t);
  }
  return ckpt;
}

std::map<std::string, torch::Tensor> module_state(const torch::nn::Module& module, const std::string& prefix) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : module.named_parameters()) out.emplace(prefix + p.key(), p.value());
  for (const auto& b : module.named_buffers()) out.emplace(prefix + b.key(), b.value());
  return out;
}

void load_module_state(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end()) throw Error("checkpoint missing tensor '" + prefix + name + "'");
    if (it->second.sizes() != dst.sizes()) throw Error("checkpoint shape mismatch for '" + prefix + name + "'");
    dst.copy_(it->second);
  };
  for (auto& p : module.named_parameters()) assign(p.key(), p.value());
  for (auto& b : module.named_buffers()) assign(b.key(), b.value());
}

}  // namespace mred
