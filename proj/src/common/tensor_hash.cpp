#include "mred/common/tensor_hash.hpp"

#include <cstdio>

#include "mred/common/checkpoint.hpp"

namespace mred {

std::uint64_t hash_tensors(const std::map<std::string, torch::Tensor>& tensors) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const unsigned char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : tensors) {
    mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    auto c = t.detach().to(torch::kFloat32).contiguous().cpu();
    mix(reinterpret_cast<const unsigned char*>(c.data_ptr<float>()), c.numel() * sizeof(float));
  }
  return h;
}

std::uint64_t hash_module(const torch::nn::Module& module) { return hash_tensors(module_state(module)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mred
