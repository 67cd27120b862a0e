#pragma once

// Toy dual encoder standing in for a pretrained CLIP.
//
// Text:  token embedding + learned positions -> 2 pre-norm self-attention
//        blocks (4 heads, MLP 256) -> LayerNorm. PAD rows are zeroed; the global
//        embedding is the unit-normalized mean of the non-PAD rows.
// Image: 4 stride-2 3x3 convs (32, 64, 96, 128 channels; 64 -> 4 pixels) ->
//        1x1 patch head + learned positions, giving one 128-d row per cell of
//        the 4x4 grid. Global is the unit-normalized mean of the patch rows.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "mred/common/image.hpp"
#include "mred/encoders/vocab.hpp"

namespace mred::enc {

inline constexpr int kEmbedDim = 128;
inline constexpr int kPatchRows = 16;
inline constexpr int kEncoderVersion = 1;

struct TextEmbedding {
  torch::Tensor tokens;  // [B, 16, 128]
  torch::Tensor global;  // [B, 128]
};

struct ImageEmbedding {
  torch::Tensor patches;  // [B, 16, 128]
  torch::Tensor global;   // [B, 128]
};

class SelfAttentionBlockImpl : public torch::nn::Module {
 public:
  SelfAttentionBlockImpl(int dim, int heads, int hidden);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& pad);

 private:
  int heads_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(SelfAttentionBlock);

class TextEncoderImpl : public torch::nn::Module {
 public:
  explicit TextEncoderImpl(int vocab_size);
  /// ids [B,16] int64, pad [B,16] bool.
  TextEmbedding forward(const torch::Tensor& ids, const torch::Tensor& pad);

 private:
  torch::nn::Embedding embed_{nullptr};
  torch::Tensor positions_;
  SelfAttentionBlock block1_{nullptr}, block2_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(TextEncoder);

class ImageEncoderImpl : public torch::nn::Module {
 public:
  ImageEncoderImpl();
  ImageEmbedding forward(const torch::Tensor& images);

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d head_{nullptr};
  torch::Tensor positions_;
};
TORCH_MODULE(ImageEncoder);

class DualEncoderNetImpl : public torch::nn::Module {
 public:
  explicit DualEncoderNetImpl(int vocab_size);
  TextEncoder text{nullptr};
  ImageEncoder image{nullptr};
  torch::Tensor log_inv_temperature;
};
TORCH_MODULE(DualEncoderNet);

class DualEncoder {
 public:
  explicit DualEncoder(Vocabulary vocab = Vocabulary::from_grammar(), std::uint64_t seed = 0);

  TokenSequence tokenize(std::string_view text) const { return vocab_.tokenize(text); }

  TextEmbedding encode_text(const std::vector<TokenSequence>& seqs) const;
  TextEmbedding encode_text(const std::vector<std::string>& texts) const;
  ImageEmbedding encode_image(const torch::Tensor& images) const;
  ImageEmbedding encode_image(const std::vector<Image>& images) const;

  /// Gradient-carrying forward passes for pretraining.
  TextEmbedding text_forward(const std::vector<TokenSequence>& seqs);
  ImageEmbedding image_forward(const torch::Tensor& images);

  void freeze();
  bool frozen() const { return frozen_; }
  void require_mutable() const;

  const Vocabulary& vocab() const { return vocab_; }
  DualEncoderNet& net() { return net_; }
  double temperature() const;
  std::uint64_t hash() const;

  void save(const std::string& path) const;
  static DualEncoder load(const std::string& path);

 private:
  Vocabulary vocab_;
  mutable DualEncoderNet net_{nullptr};
  bool frozen_ = false;
};

std::pair<torch::Tensor, torch::Tensor> batch_tokens(const std::vector<TokenSequence>& seqs);

}  // namespace mred::enc
