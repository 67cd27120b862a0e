#include "mred/encoders/encoders.hpp"

#include <cmath>

#include "mred/common/attention.hpp"
#include "mred/common/checkpoint.hpp"
#include "mred/common/error.hpp"
#include "mred/common/tensor_hash.hpp"

namespace mred::enc {

namespace nn = torch::nn;

SelfAttentionBlockImpl::SelfAttentionBlockImpl(int dim, int heads, int hidden) : heads_(heads) {
  norm1_ = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  norm2_ = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  qkv_ = register_module("qkv", nn::Linear(dim, 3 * dim));
  proj_ = register_module("proj", nn::Linear(dim, dim));
  fc1_ = register_module("fc1", nn::Linear(dim, hidden));
  fc2_ = register_module("fc2", nn::Linear(hidden, dim));
}

torch::Tensor SelfAttentionBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& pad) {
  auto qkv = qkv_->forward(norm1_->forward(x)).chunk(3, -1);
  auto h = x + proj_->forward(multi_head_attention(qkv[0], qkv[1], qkv[2], heads_, pad));
  return h + fc2_->forward(torch::gelu(fc1_->forward(norm2_->forward(h))));
}

TextEncoderImpl::TextEncoderImpl(int vocab_size) {
  embed_ = register_module("embed", nn::Embedding(vocab_size, kEmbedDim));
  positions_ = register_parameter("positions", torch::randn({kTextLength, kEmbedDim}) * 0.02);
  block1_ = register_module("block1", SelfAttentionBlock(kEmbedDim, 4, 256));
  block2_ = register_module("block2", SelfAttentionBlock(kEmbedDim, 4, 256));
  norm_ = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({kEmbedDim})));
}

TextEmbedding TextEncoderImpl::forward(const torch::Tensor& ids, const torch::Tensor& pad) {
  auto x = embed_->forward(ids) + positions_.unsqueeze(0);
  x = block1_->forward(x, pad);
  x = block2_->forward(x, pad);
  auto keep = (~pad).to(x.dtype()).unsqueeze(-1);
  x = norm_->forward(x) * keep;
  auto count = keep.sum(1).clamp_min(1.0);
  auto mean = x.sum(1) / count;
  auto norm = mean.norm(2, -1, true);
  // All-PAD input keeps a zero global embedding.
  auto global = torch::where(norm > 0, mean / norm.clamp_min(1e-12), torch::zeros_like(mean));
  return {x, global};
}

ImageEncoderImpl::ImageEncoderImpl() {
  auto conv = [](int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1)); };
  trunk_ = register_module("trunk", nn::Sequential(conv(3, 32), nn::SiLU(), conv(32, 64), nn::SiLU(), conv(64, 96),
                                                   nn::SiLU(), conv(96, 128), nn::SiLU()));
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(128, kEmbedDim, 1)));
  positions_ = register_parameter("positions", torch::randn({kPatchRows, kEmbedDim}) * 0.02);
}

ImageEmbedding ImageEncoderImpl::forward(const torch::Tensor& images) {
  auto f = head_->forward(trunk_->forward(images));  // [B,128,4,4]
  auto patches = f.flatten(2).transpose(1, 2) + positions_.unsqueeze(0);
  auto global = torch::nn::functional::normalize(patches.mean(1),
                                                 torch::nn::functional::NormalizeFuncOptions().dim(-1));
  return {patches, global};
}

DualEncoderNetImpl::DualEncoderNetImpl(int vocab_size) {
  text = register_module("text", TextEncoder(vocab_size));
  image = register_module("image", ImageEncoder());
  log_inv_temperature = register_parameter("log_inv_temperature", torch::full({1}, std::log(1.0 / 0.07)));
}

std::pair<torch::Tensor, torch::Tensor> batch_tokens(const std::vector<TokenSequence>& seqs) {
  const auto B = static_cast<int64_t>(seqs.size());
  auto ids = torch::empty({B, kTextLength}, torch::kInt64);
  auto pad = torch::empty({B, kTextLength}, torch::kBool);
  auto* ip = ids.data_ptr<int64_t>();
  auto* pp = pad.data_ptr<bool>();
  for (int64_t b = 0; b < B; ++b)
    for (int i = 0; i < kTextLength; ++i) {
      ip[b * kTextLength + i] = seqs[b].ids[i];
      pp[b * kTextLength + i] = seqs[b].pad[i];
    }
  return {ids, pad};
}

DualEncoder::DualEncoder(Vocabulary vocab, std::uint64_t seed) : vocab_(std::move(vocab)) {
  torch::manual_seed(seed);
  net_ = DualEncoderNet(static_cast<int>(vocab_.size()));
}

TextEmbedding DualEncoder::text_forward(const std::vector<TokenSequence>& seqs) {
  auto [ids, pad] = batch_tokens(seqs);
  return net_->text->forward(ids, pad);
}

ImageEmbedding DualEncoder::image_forward(const torch::Tensor& images) { return net_->image->forward(images); }

TextEmbedding DualEncoder::encode_text(const std::vector<TokenSequence>& seqs) const {
  torch::NoGradGuard ng;
  auto [ids, pad] = batch_tokens(seqs);
  return net_->text->forward(ids, pad);
}

TextEmbedding DualEncoder::encode_text(const std::vector<std::string>& texts) const {
  std::vector<TokenSequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(vocab_.tokenize(t));
  return encode_text(seqs);
}

ImageEmbedding DualEncoder::encode_image(const torch::Tensor& images) const {
  require(images.dim() == 4 && images.size(1) == 3, "encode_image expects [B,3,64,64]");
  torch::NoGradGuard ng;
  return net_->image->forward(images);
}

ImageEmbedding DualEncoder::encode_image(const std::vector<Image>& images) const {
  return encode_image(stack_images(images));
}

void DualEncoder::freeze() {
  frozen_ = true;
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

void DualEncoder::require_mutable() const {
  if (frozen_) throw Error("weights frozen");
}

double DualEncoder::temperature() const { return std::exp(-net_->log_inv_temperature.item<double>()); }

std::uint64_t DualEncoder::hash() const { return hash_module(*net_); }

void DualEncoder::save(const std::string& path) const {
  nlohmann::json header = {{"kind", "encoders"},     {"version", kEncoderVersion}, {"frozen", frozen_},
                           {"embed_dim", kEmbedDim}, {"text_length", kTextLength}, {"patch_rows", kPatchRows},
                           {"vocab", vocab_.to_json()}};
  save_checkpoint(path, header, module_state(*net_));
}

DualEncoder DualEncoder::load(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "encoders") throw Error(path + " is not an encoder checkpoint");
  if (ckpt.header.value("version", 0) != kEncoderVersion) throw Error("unsupported encoder version in " + path);
  DualEncoder e(Vocabulary::from_json(ckpt.header.at("vocab")));
  load_module_state(*e.net_, ckpt);
  if (ckpt.header.at("frozen").get<bool>()) e.freeze();
  e.net_->eval();
  return e;
}

}  // namespace mred::enc
