#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace mred {

inline constexpr int kImageSize = 64;
inline constexpr int kImageChannels = 3;

/// 64x64 RGB image, HWC layout, values in [-1, 1].
struct Image {
  std::vector<float> pixels = std::vector<float>(kImageSize * kImageSize * kImageChannels, 0.0f);

  float& at(int y, int x, int c) { return pixels[(y * kImageSize + x) * kImageChannels + c]; }
  float at(int y, int x, int c) const { return pixels[(y * kImageSize + x) * kImageChannels + c]; }

  bool operator==(const Image&) const = default;
};

/// 8-bit level to the [-1, 1] pixel range. Exact inverse of `to_byte`.
inline float from_byte(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
std::uint8_t to_byte(float v);

/// [3, 64, 64] float tensor.
torch::Tensor to_tensor(const Image& img);
/// Accepts [3, 64, 64]; values are clamped to [-1, 1].
Image from_tensor(const torch::Tensor& t);

torch::Tensor stack_images(const std::vector<Image>& images);
std::vector<Image> unstack_images(const torch::Tensor& batch);

}  // namespace mred
