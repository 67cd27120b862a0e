#pragma once

#include <torch/torch.h>

#include "mred/encoders/encoders.hpp"

namespace mred::enc {

inline constexpr int kConditionRows = kTextLength + kPatchRows;

/// Generator condition: 16 text rows followed by 16 image-patch rows, 128 wide.
struct Condition {
  torch::Tensor rows;  // [32, 128]
  bool null = false;
};

/// text_emb [16,128], patch_emb [16,128]. The result never carries the null flag.
Condition build_condition(const torch::Tensor& text_emb, const torch::Tensor& patch_emb);
/// All-zero rows with the null flag set.
Condition null_condition();

/// Batched assembly: [B,16,128] + [B,16,128] -> [B,32,128].
torch::Tensor build_condition_batch(const torch::Tensor& text_emb, const torch::Tensor& patch_emb);
torch::Tensor null_condition_batch(int64_t batch);

torch::Tensor text_block(const torch::Tensor& rows);
torch::Tensor patch_block(const torch::Tensor& rows);

}  // namespace mred::enc
