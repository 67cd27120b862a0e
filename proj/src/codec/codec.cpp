#include "mred/codec/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mred/common/checkpoint.hpp"
#include "mred/common/error.hpp"
#include "mred/common/tensor_hash.hpp"

namespace mred::codec {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride = 1, int pad = -1) {
  if (pad < 0) pad = k / 2;
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

nn::Upsample up2() {
  return nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

}  // namespace

CodecNetImpl::CodecNetImpl() {
  encoder_ = register_module(
      "encoder", nn::Sequential(conv(3, 16, 3), nn::SiLU(), conv(16, 32, 4, 2, 1), nn::SiLU(), conv(32, 64, 4, 2, 1),
                                nn::SiLU(), conv(64, 64, 3), nn::SiLU(), conv(64, kLatentChannels, 1)));
  decoder_ = register_module(
      "decoder", nn::Sequential(conv(kLatentChannels, 64, 3), nn::SiLU(), conv(64, 64, 3), nn::SiLU(), up2(),
                                conv(64, 32, 3), nn::SiLU(), up2(), conv(32, 16, 3), nn::SiLU(), conv(16, 3, 3)));
}

torch::Tensor CodecNetImpl::encode(const torch::Tensor& x) { return encoder_->forward(x); }
torch::Tensor CodecNetImpl::decode(const torch::Tensor& z) { return decoder_->forward(z); }

Codec::Codec(std::uint64_t seed) {
  torch::manual_seed(seed);
  net_ = CodecNet();
}

torch::Tensor Codec::encode(const torch::Tensor& images) const {
  require(images.dim() == 4 && images.size(1) == 3 && images.size(2) == kImageSize &&
                  images.size(3) == kImageSize,
              "codec.encode expects [B,3,64,64]");
  torch::NoGradGuard ng;
  return net_->encode(images) * latent_scale_;
}

torch::Tensor Codec::decode(const torch::Tensor& latents) const {
  require(latents.dim() == 4 && latents.size(1) == kLatentChannels && latents.size(2) == kLatentSize &&
                  latents.size(3) == kLatentSize,
              "codec.decode expects [B,4,16,16]");
  torch::NoGradGuard ng;
  return net_->decode(latents / latent_scale_).clamp(-1.0, 1.0);
}

torch::Tensor Codec::encode(const Image& img) const { return encode(to_tensor(img).unsqueeze(0))[0]; }

Image Codec::decode_image(const torch::Tensor& latent) const { return from_tensor(decode(latent.unsqueeze(0))[0]); }

void Codec::require_mutable() const {
  if (frozen_) throw Error("weights frozen");
}

double Codec::fit_batch(torch::optim::Optimizer& opt, const torch::Tensor& images) {
  require_mutable();
  net_->train();
  opt.zero_grad();
  auto recon = net_->decode(net_->encode(images));
  auto loss = torch::mse_loss(recon, images);
  loss.backward();
  opt.step();
  return loss.item<double>();
}

void Codec::freeze(float latent_scale) {
  require_mutable();
  latent_scale_ = latent_scale;
  frozen_ = true;
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

std::uint64_t Codec::hash() const { return hash_module(*net_); }

void Codec::save(const std::string& path) const {
  nlohmann::json header = {{"kind", "codec"},
                           {"version", kCodecVersion},
                           {"frozen", frozen_},
                           {"latent_scale", latent_scale_},
                           {"image_shape", {3, kImageSize, kImageSize}},
                           {"latent_shape", {kLatentChannels, kLatentSize, kLatentSize}}};
  save_checkpoint(path, header, module_state(*net_));
}

Codec Codec::load(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "codec") throw Error(path + " is not a codec checkpoint");
  if (ckpt.header.value("version", 0) != kCodecVersion) throw Error("unsupported codec version in " + path);
  Codec c;
  load_module_state(*c.net_, ckpt);
  c.latent_scale_ = ckpt.header.at("latent_scale").get<float>();
  c.frozen_ = ckpt.header.at("frozen").get<bool>();
  if (c.frozen_) {
    for (auto& p : c.net_->parameters()) p.set_requires_grad(false);
  }
  c.net_->eval();
  return c;
}

Codec train_codec(const std::vector<Image>& images, const CodecTrainConfig& cfg, CodecTrainResult* result,
                  const std::function<void(int, double)>& on_epoch) {
  if (images.empty()) throw Error("train_codec: empty dataset");
  Codec codec(cfg.seed);
  const auto data = stack_images(images);
  const auto n = static_cast<int64_t>(images.size());
  const int64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = batches_per_epoch * cfg.epochs;

  torch::optim::Adam opt(codec.net()->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  std::mt19937_64 rng(cfg.seed);
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      // Cosine decay to 5% of the base rate.
      const double t = static_cast<double>(step) / std::max<int64_t>(1, total_steps - 1);
      const double lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(M_PI * t)));
      for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
      const int64_t lo = b * cfg.batch_size;
      const int64_t hi = std::min(n, lo + cfg.batch_size);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + lo, order.begin() + hi), torch::kInt64);
      losses.push_back(codec.fit_batch(opt, data.index_select(0, idx)));
      if (!std::isfinite(losses.back())) throw Error("codec training diverged (non-finite loss)");
      ++step;
    }
    if (epoch == 0 && losses.size() >= 2) {
      const size_t k = std::max<size_t>(1, losses.size() / 4);
      const double head = std::accumulate(losses.begin(), losses.begin() + k, 0.0) / k;
      const double tail = std::accumulate(losses.end() - k, losses.end(), 0.0) / k;
      if (tail >= head)
        throw Error("codec loss did not decrease over the first epoch (first " + std::to_string(head) + ", last " +
                    std::to_string(tail) + ")");
    }
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size();
    if (result) result->epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }

  torch::Tensor latents;
  {
    torch::NoGradGuard ng;
    codec.net()->eval();
    latents = codec.net()->encode(data);
  }
  const double stdev = latents.std().item<double>();
  codec.freeze(static_cast<float>(stdev > 0 ? 1.0 / stdev : 1.0));
  return codec;
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  const double mse = torch::mse_loss(a.to(torch::kFloat64), b.to(torch::kFloat64)).item<double>();
  if (mse <= 0) return std::numeric_limits<double>::infinity();
  // Peak-to-peak range of [-1, 1] is 2.
  return 10.0 * std::log10(4.0 / mse);
}

double psnr(const Image& a, const Image& b) { return psnr(to_tensor(a), to_tensor(b)); }

}  // namespace mred::codec
