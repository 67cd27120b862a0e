#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <torch/torch.h>

namespace mred {

/// FNV-1a over the raw float32 bytes of each tensor, visited in name order.
std::uint64_t hash_tensors(const std::map<std::string, torch::Tensor>& tensors);
std::uint64_t hash_module(const torch::nn::Module& module);

std::string hex64(std::uint64_t v);

}  // namespace mred
