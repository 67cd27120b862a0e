#pragma once

#include <array>
#include <vector>

#include "mred/common/image.hpp"
#include "mred/synthdata/attributes.hpp"

namespace mred::synth {

/// Binary 64x64 foreground mask of a garment shape template.
struct SilhouetteMask {
  std::vector<std::uint8_t> mask = std::vector<std::uint8_t>(kImageSize * kImageSize, 0);
  int template_id = 0;

  bool operator==(const SilhouetteMask&) const = default;
  std::uint8_t at(int y, int x) const { return mask[y * kImageSize + x]; }
  int area() const;
};

struct Rendered {
  Image image;
  SilhouetteMask silhouette;
};

/// 8-bit background level (mid-gray).
inline constexpr std::uint8_t kBackgroundLevel = 128;

/// Fill color (8-bit RGB) for a color/brightness pair before any pattern overlay.
std::array<std::uint8_t, 3> fill_color(int color, int brightness);

Rendered render_garment(const AttributeVector& attrs);

/// Mask for shape template `id` in [0, 12). Same as render_garment(attrs).silhouette
/// for any attrs with attrs.shape_id() == id.
SilhouetteMask silhouette_template(int id);

/// [1, 64, 64] float tensor with values in {0, 1}.
torch::Tensor mask_tensor(const SilhouetteMask& m);

/// Foreground mask of an image: pixels whose color differs from the background level.
SilhouetteMask foreground_mask(const Image& img, float tolerance = 0.05f);

}  // namespace mred::synth
