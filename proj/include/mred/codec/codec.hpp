#pragma once

// Deterministic convolutional autoencoder that defines the latent space.
//
//   encoder  3x64x64 -> conv3 16 -> conv4/s2 32 (32x32) -> conv4/s2 64 (16x16)
//            -> conv3 64 -> conv1 4                               => 4x16x16
//   decoder  4x16x16 -> conv3 64 -> conv3 64 -> up2 conv3 32 -> up2 conv3 16
//            -> conv3 3                                          => 3x64x64
// SiLU between layers. Latents are multiplied by `latent_scale` (set at
// freeze time to 1/std of the training latents) so diffusion sees unit scale.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mred/common/image.hpp"

namespace mred::codec {

inline constexpr int kLatentChannels = 4;
inline constexpr int kLatentSize = kImageSize / 4;
inline constexpr int kCodecVersion = 1;

class CodecNetImpl : public torch::nn::Module {
 public:
  CodecNetImpl();
  torch::Tensor encode(const torch::Tensor& x);
  torch::Tensor decode(const torch::Tensor& z);

 private:
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(CodecNet);

class Codec {
 public:
  explicit Codec(std::uint64_t seed = 0);

  /// [B,3,64,64] in [-1,1] -> [B,4,16,16] scaled latents.
  torch::Tensor encode(const torch::Tensor& images) const;
  /// [B,4,16,16] -> [B,3,64,64], clamped to [-1,1].
  torch::Tensor decode(const torch::Tensor& latents) const;

  torch::Tensor encode(const Image& img) const;
  Image decode_image(const torch::Tensor& latent) const;

  /// One optimizer step on a batch; returns the batch MSE. Throws "weights frozen" once frozen.
  double fit_batch(torch::optim::Optimizer& opt, const torch::Tensor& images);

  void freeze(float latent_scale);
  bool frozen() const { return frozen_; }
  float latent_scale() const { return latent_scale_; }

  CodecNet& net() { return net_; }
  std::uint64_t hash() const;

  void save(const std::string& path) const;
  static Codec load(const std::string& path);

 private:
  void require_mutable() const;

  mutable CodecNet net_;
  bool frozen_ = false;
  float latent_scale_ = 1.0f;
};

struct CodecTrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

struct CodecTrainResult {
  std::vector<double> epoch_loss;
};

/// Trains on `images` and freezes the result. Throws if the loss does not
/// decrease over the first epoch.
Codec train_codec(const std::vector<Image>& images, const CodecTrainConfig& cfg, CodecTrainResult* result = nullptr,
                  const std::function<void(int, double)>& on_epoch = {});

double psnr(const Image& a, const Image& b);
double psnr(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace mred::codec
