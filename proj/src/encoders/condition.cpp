#include "mred/encoders/condition.hpp"
#include "mred/common/error.hpp"

namespace mred::enc {

Condition build_condition(const torch::Tensor& text_emb, const torch::Tensor& patch_emb) {
  require(text_emb.sizes() == torch::IntArrayRef({kTextLength, kEmbedDim}), "text block must be [16,128]");
  require(patch_emb.sizes() == torch::IntArrayRef({kPatchRows, kEmbedDim}), "patch block must be [16,128]");
  return {torch::cat({text_emb, patch_emb}, 0), false};
}

Condition null_condition() { return {torch::zeros({kConditionRows, kEmbedDim}), true}; }

torch::Tensor build_condition_batch(const torch::Tensor& text_emb, const torch::Tensor& patch_emb) {
  require(text_emb.dim() == 3 && text_emb.size(1) == kTextLength && text_emb.size(2) == kEmbedDim,
              "text block must be [B,16,128]");
  require(patch_emb.dim() == 3 && patch_emb.size(1) == kPatchRows && patch_emb.size(2) == kEmbedDim,
              "patch block must be [B,16,128]");
  return torch::cat({text_emb, patch_emb}, 1);
}

torch::Tensor null_condition_batch(int64_t batch) { return torch::zeros({batch, kConditionRows, kEmbedDim}); }

torch::Tensor text_block(const torch::Tensor& rows) { return rows.narrow(-2, 0, kTextLength); }
torch::Tensor patch_block(const torch::Tensor& rows) { return rows.narrow(-2, kTextLength, kPatchRows); }

}  // namespace mred::enc
