#pragma once

// Checkpoint container shared by every trained component.
//
// Layout (little-endian):
//   8 bytes   magic "MREDCKPT"
//   u32       container version
//   u64       header length H
//   H bytes   UTF-8 JSON header
//   payload   raw float32 tensor data, offsets given in header["tensors"]
//
// The header always carries "kind", "version" and "tensors"
// ([{name, shape, offset}]); components add their own fields.

#include <map>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

namespace mred {

inline constexpr std::uint32_t kCheckpointContainerVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, torch::Tensor> tensors;
};

void save_checkpoint(const std::string& path, nlohmann::json header,
                     const std::map<std::string, torch::Tensor>& tensors);
Checkpoint load_checkpoint(const std::string& path);

/// Reads only the JSON header.
nlohmann::json read_checkpoint_header(const std::string& path);

/// Copies `ckpt` tensors into the module's named parameters and buffers.
/// Missing or shape-mismatched entries throw.
void load_module_state(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix = "");
std::map<std::string, torch::Tensor> module_state(const torch::nn::Module& module, const std::string& prefix = "");

}  // namespace mred
