#pragma once

#include <optional>

#include <torch/torch.h>

namespace mred {

/// Scaled dot-product attention over already-projected q [B,Nq,C], k/v [B,Nk,C],
/// split into `heads`. `key_pad` [B,Nk] (true = ignore) is optional; a row whose
/// keys are all masked yields zeros.
torch::Tensor multi_head_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v, int heads,
                                   const std::optional<torch::Tensor>& key_pad = std::nullopt);

}  // namespace mred
