#include "mred/diffusion/unet.hpp"

#include <cmath>

#include "mred/common/attention.hpp"
#include "mred/common/error.hpp"

namespace mred::diff {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::GroupNorm group_norm(int channels) { return nn::GroupNorm(nn::GroupNormOptions(std::min(8, channels), channels)); }

nn::Conv2d zero_conv(int channels) {
  auto c = nn::Conv2d(nn::Conv2dOptions(channels, channels, 1));
  torch::NoGradGuard ng;
  c->weight.zero_();
  c->bias.zero_();
  return c;
}

}  // namespace

LoraLinearImpl::LoraLinearImpl(int in, int out) {
  base = register_module("base", nn::Linear(nn::LinearOptions(in, out).bias(false)));
}

void LoraLinearImpl::enable_lora(int rank, double alpha) {
  if (rank <= 0) throw Error("LoRA rank must be positive");
  if (rank_ > 0) throw Error("LoRA already enabled");
  const auto in = base->weight.size(1), out = base->weight.size(0);
  rank_ = rank;
  scale_ = alpha / rank;
  lora_a = register_parameter("lora_a", torch::randn({rank, in}) / std::sqrt(static_cast<double>(in)));
  lora_b = register_parameter("lora_b", torch::zeros({out, rank}));
}

torch::Tensor LoraLinearImpl::forward(const torch::Tensor& x) {
  auto y = base->forward(x);
  if (rank_ == 0) return y;
  return y + scale_ * torch::matmul(torch::matmul(x, lora_a.t()), lora_b.t());
}

ResBlockImpl::ResBlockImpl(int in, int out, int time_dim) {
  norm1_ = register_module("norm1", group_norm(in));
  conv1_ = register_module("conv1", conv3(in, out));
  time_ = register_module("time", nn::Linear(time_dim, out));
  norm2_ = register_module("norm2", group_norm(out));
  conv2_ = register_module("conv2", conv3(out, out));
  if (in != out) skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1_->forward(torch::silu(norm1_->forward(x)));
  h = h + time_->forward(temb).unsqueeze(-1).unsqueeze(-1);
  h = conv2_->forward(torch::silu(norm2_->forward(h)));
  return h + (skip_ ? skip_->forward(x) : x);
}

CrossAttentionImpl::CrossAttentionImpl(int channels, int cond_dim, int heads) : heads_(heads) {
  norm_ = register_module("norm", group_norm(channels));
  q = register_module("q", LoraLinear(channels, channels));
  k = register_module("k", LoraLinear(cond_dim, channels));
  v = register_module("v", LoraLinear(cond_dim, channels));
  out_ = register_module("out", nn::Linear(channels, channels));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  const auto B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  auto tokens = norm_->forward(x).flatten(2).transpose(1, 2);  // [B,HW,C]
  auto attended = multi_head_attention(q->forward(tokens), k->forward(cond), v->forward(cond), heads_);
  return x + out_->forward(attended).transpose(1, 2).reshape({B, C, H, W});
}

void CrossAttentionImpl::enable_lora(int rank, double alpha) {
  q->enable_lora(rank, alpha);
  k->enable_lora(rank, alpha);
  v->enable_lora(rank, alpha);
}

EncoderStackImpl::EncoderStackImpl(const UNetConfig& cfg) {
  const auto& ch = cfg.channels;
  for (size_t i = 0; i < ch.size(); ++i) {
    const int in = i == 0 ? ch[0] : ch[i - 1];
    res_.push_back(register_module("res" + std::to_string(i), ResBlock(in, ch[i], cfg.time_dim)));
    attn_.push_back(register_module("attn" + std::to_string(i), CrossAttention(ch[i], cfg.cond_dim, cfg.heads)));
    if (i + 1 < ch.size()) down_.push_back(register_module("down" + std::to_string(i), conv3(ch[i], ch[i], 2)));
  }
}

std::vector<torch::Tensor> EncoderStackImpl::forward(torch::Tensor h, const torch::Tensor& temb,
                                                     const torch::Tensor& cond,
                                                     const std::vector<torch::Tensor>& inject) {
  std::vector<torch::Tensor> outs;
  for (size_t i = 0; i < res_.size(); ++i) {
    h = attn_[i]->forward(res_[i]->forward(h, temb), cond);
    if (!inject.empty()) h = h + inject[i];
    outs.push_back(h);
    if (i < down_.size()) h = down_[i]->forward(h);
  }
  return outs;
}

PoseBranchImpl::PoseBranchImpl(const UNetConfig& cfg) {
  input_ = register_module("input", conv3(4, cfg.channels[0]));
  stem_ = register_module("stem", conv3(1, cfg.channels[0]));
  blocks_ = register_module("blocks", EncoderStack(cfg));
  for (size_t i = 0; i < cfg.channels.size(); ++i)
    zero_.push_back(register_module("zero" + std::to_string(i), zero_conv(cfg.channels[i])));
}

std::vector<torch::Tensor> PoseBranchImpl::forward(const torch::Tensor& z, const torch::Tensor& pose,
                                                   const torch::Tensor& temb, const torch::Tensor& cond) {
  const auto factor = pose.size(-1) / z.size(-1);
  auto p = factor > 1 ? torch::avg_pool2d(pose, factor) : pose;
  auto feats = blocks_->forward(input_->forward(z) + stem_->forward(p), temb, cond);
  for (size_t i = 0; i < feats.size(); ++i) feats[i] = zero_[i]->forward(feats[i]);
  return feats;
}

UNetImpl::UNetImpl(UNetConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.channels.size() != 4) throw Error("U-net expects exactly 4 encoder/decoder blocks");
  const auto& ch = cfg_.channels;
  time1_ = register_module("time1", nn::Linear(64, cfg_.time_dim));
  time2_ = register_module("time2", nn::Linear(cfg_.time_dim, cfg_.time_dim));
  input_ = register_module("input", conv3(4, ch[0]));
  encoder = register_module("encoder", EncoderStack(cfg_));
  pose = register_module("pose", PoseBranch(cfg_));
  mid_ = register_module("mid", ResBlock(ch[3], ch[3], cfg_.time_dim));
  for (int i = 3; i >= 0; --i) {
    dec_res_.push_back(register_module("dec_res" + std::to_string(i), ResBlock(2 * ch[i], ch[i], cfg_.time_dim)));
    dec_attn_.push_back(
        register_module("dec_attn" + std::to_string(i), CrossAttention(ch[i], cfg_.cond_dim, cfg_.heads)));
    if (i > 0) up_.push_back(register_module("up" + std::to_string(i), conv3(ch[i], ch[i - 1])));
  }
  out_norm_ = register_module("out_norm", group_norm(ch[0]));
  out_ = register_module("out", conv3(ch[0], 4));
}

torch::Tensor UNetImpl::time_embedding(const torch::Tensor& taus) {
  const int half = 32;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
  auto args = taus.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  return time2_->forward(torch::silu(time1_->forward(emb)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& z, const torch::Tensor& taus, const torch::Tensor& cond,
                                const torch::Tensor& pose_mask) {
  auto temb = time_embedding(taus);
  auto control = pose->forward(z, pose_mask, temb, cond);
  auto skips = encoder->forward(input_->forward(z), temb, cond, control);
  auto h = mid_->forward(skips.back(), temb);
  for (size_t j = 0; j < dec_res_.size(); ++j) {
    const size_t level = skips.size() - 1 - j;
    h = dec_res_[j]->forward(torch::cat({h, skips[level]}, 1), temb);
    h = dec_attn_[j]->forward(h, cond);
    if (j < up_.size()) {
      h = torch::upsample_nearest2d(h, {h.size(2) * 2, h.size(3) * 2});
      h = up_[j]->forward(h);
    }
  }
  return out_->forward(torch::silu(out_norm_->forward(h)));
}

void UNetImpl::enable_lora(int rank, double alpha) {
  for (auto& a : dec_attn_) a->enable_lora(rank, alpha);
}

std::vector<torch::Tensor> UNetImpl::lora_parameters() {
  std::vector<torch::Tensor> out;
  for (const auto& p : named_parameters())
    if (p.key().find("lora_") != std::string::npos) out.push_back(p.value());
  return out;
}

std::vector<torch::Tensor> UNetImpl::base_parameters() {
  std::vector<torch::Tensor> out;
  for (const auto& p : named_parameters())
    if (p.key().find("lora_") == std::string::npos) out.push_back(p.value());
  return out;
}

}  // namespace mred::diff
