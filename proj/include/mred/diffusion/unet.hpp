#pragma once

// Latent U-net with a pose branch and optional LoRA on decoder cross-attention.
//
// Layout (latent 4x16x16, widths from UNetConfig::channels, default 32/64/96/128):
//   encoder  4 blocks at 16, 8, 4, 2 px: ResBlock(time) + CrossAttention(c),
//            stride-2 conv between blocks
//   middle   ResBlock at 2 px
//   decoder  4 blocks mirroring the encoder, each concatenating the matching
//            encoder skip: ResBlock(time) + CrossAttention(c, LoRA-capable),
//            nearest x2 upsample + conv between blocks
//   pose     a second copy of the encoder structure fed with conv(z) plus a
//            one-conv stem over the silhouette average-pooled to 16x16; each
//            block's activation passes through a zero-initialised 1x1 conv and
//            is added to the matching U-net encoder block.
// The network's raw output is a z0 estimate; Generator converts it to eps.

#include <vector>

#include <torch/torch.h>

namespace mred::diff {

struct UNetConfig {
  std::vector<int> channels = {32, 64, 96, 128};
  int heads = 4;
  int cond_dim = 128;
  int time_dim = 128;
};

/// Linear layer (no bias) with an optional rank-r adapter: W x + (alpha/r) B A x.
class LoraLinearImpl : public torch::nn::Module {
 public:
  LoraLinearImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x);

  /// Registers A (r x in, small random) and B (out x r, zeros).
  void enable_lora(int rank, double alpha);
  bool has_lora() const { return rank_ > 0; }
  torch::nn::Linear base{nullptr};
  torch::Tensor lora_a, lora_b;

 private:
  int rank_ = 0;
  double scale_ = 0.0;
};
TORCH_MODULE(LoraLinear);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear time_{nullptr};
};
TORCH_MODULE(ResBlock);

class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int channels, int cond_dim, int heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);
  void enable_lora(int rank, double alpha);

  LoraLinear q{nullptr}, k{nullptr}, v{nullptr};

 private:
  int heads_;
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(CrossAttention);

class EncoderStackImpl : public torch::nn::Module {
 public:
  explicit EncoderStackImpl(const UNetConfig& cfg);
  /// Runs the 4 blocks; `inject` (optional, one per block) is added to each block output.
  /// Returns the 4 block outputs (pre-downsample).
  std::vector<torch::Tensor> forward(torch::Tensor h, const torch::Tensor& temb, const torch::Tensor& cond,
                                     const std::vector<torch::Tensor>& inject = {});

 private:
  std::vector<ResBlock> res_;
  std::vector<CrossAttention> attn_;
  std::vector<torch::nn::Conv2d> down_;
};
TORCH_MODULE(EncoderStack);

class PoseBranchImpl : public torch::nn::Module {
 public:
  explicit PoseBranchImpl(const UNetConfig& cfg);
  std::vector<torch::Tensor> forward(const torch::Tensor& z, const torch::Tensor& pose, const torch::Tensor& temb,
                                     const torch::Tensor& cond);

 private:
  torch::nn::Conv2d input_{nullptr}, stem_{nullptr};
  EncoderStack blocks_{nullptr};
  std::vector<torch::nn::Conv2d> zero_;
};
TORCH_MODULE(PoseBranch);

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(UNetConfig cfg = {});

  /// z [B,4,16,16], taus int64 [B], cond [B,32,128], pose [B,1,64,64] -> raw output [B,4,16,16].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& taus, const torch::Tensor& cond,
                        const torch::Tensor& pose);

  void enable_lora(int rank, double alpha);
  std::vector<torch::Tensor> lora_parameters();
  /// Every parameter that is not a LoRA adapter (U-net + pose branch).
  std::vector<torch::Tensor> base_parameters();

  const UNetConfig& config() const { return cfg_; }

  EncoderStack encoder{nullptr};
  PoseBranch pose{nullptr};

 private:
  torch::Tensor time_embedding(const torch::Tensor& taus);

  UNetConfig cfg_;
  torch::nn::Linear time1_{nullptr}, time2_{nullptr};
  torch::nn::Conv2d input_{nullptr};
  ResBlock mid_{nullptr};
  std::vector<ResBlock> dec_res_;
  std::vector<CrossAttention> dec_attn_;
  std::vector<torch::nn::Conv2d> up_;
  torch::nn::GroupNorm out_norm_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(UNet);

}  // namespace mred::diff
