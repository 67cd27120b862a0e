#include "mred/synthdata/render.hpp"

#include <cmath>

#include "mred/common/error.hpp"

namespace mred::synth {
namespace {

// Garment geometry on the 64x64 canvas (rows grow downward).
constexpr int kShoulderRow = 12;
constexpr int kNeckHalfWidth = 3;
constexpr int kNeckDepth = 3;

struct Span {
  int x0, x1;  // inclusive
};

// Bright palette; dark variants scale by kDarkFactor.
constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette = {{
    {220, 40, 40},    // red
    {40, 80, 220},    // blue
    {40, 180, 60},    // green
    {235, 210, 30},   // yellow
    {70, 70, 70},     // black
    {240, 240, 240},  // white
}};
constexpr double kDarkFactor = 0.4;

constexpr int kStripePeriod = 8;
constexpr int kStripeWidth = 3;
constexpr int kDotPeriod = 8;
constexpr double kDotRadius2 = 2.5;

void fill_rect(SilhouetteMask& m, int y0, int y1, int x0, int x1) {
  for (int y = std::max(0, y0); y <= std::min(kImageSize - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(kImageSize - 1, x1); ++x) m.mask[y * kImageSize + x] = 1;
}

SilhouetteMask build_shape(int category, int sleeve, int hem) {
  SilhouetteMask m;
  m.template_id = (category * 3 + sleeve) * 2 + hem;
  Span torso{};
  int torso_bottom = 0;
  if (category == 0) {
    // Dress: fitted bodice then a skirt flaring linearly to the hem.
    torso = {24, 39};
    const int waist = 30;
    fill_rect(m, kShoulderRow, waist, torso.x0, torso.x1);
    const int hem_row = hem == 1 ? 58 : 44;
    const int flare = hem == 1 ? 14 : 8;
    for (int y = waist + 1; y <= hem_row; ++y) {
      const double t = static_cast<double>(y - waist) / (hem_row - waist);
      const int grow = static_cast<int>(std::lround(t * flare));
      fill_rect(m, y, y, torso.x0 - grow, torso.x1 + grow);
    }
    torso_bottom = hem_row;
  } else {
    // Shirt: straight, wider body.
    torso = {21, 42};
    torso_bottom = hem == 1 ? 48 : 36;
    fill_rect(m, kShoulderRow, torso_bottom, torso.x0, torso.x1);
  }
  // Neckline notch.
  const int mid = (torso.x0 + torso.x1) / 2;
  for (int y = kShoulderRow; y < kShoulderRow + kNeckDepth; ++y)
    for (int x = mid - kNeckHalfWidth + 1; x <= mid + kNeckHalfWidth; ++x) m.mask[y * kImageSize + x] = 0;

  if (sleeve > 0) {
    const int sleeve_bottom = sleeve == 2 ? std::min(torso_bottom, 40) : kShoulderRow + 8;
    const int width = sleeve == 2 ? 6 : 7;
    fill_rect(m, kShoulderRow + 1, sleeve_bottom, torso.x0 - width, torso.x0 - 1);
    fill_rect(m, kShoulderRow + 1, sleeve_bottom, torso.x1 + 1, torso.x1 + width);
  }
  return m;
}

std::array<std::uint8_t, 3> overlay_color(const std::array<std::uint8_t, 3>& fill) {
  const double luma = 0.299 * fill[0] + 0.587 * fill[1] + 0.114 * fill[2];
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double v = luma > 100.0 ? fill[c] * 0.35 : fill[c] + (255.0 - fill[c]) * 0.55;
    out[c] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

}  // namespace

int SilhouetteMask::area() const {
  int a = 0;
  for (auto v : mask) a += v;
  return a;
}

std::array<std::uint8_t, 3> fill_color(int color, int brightness) {
  if (color < 0 || color >= 6 || brightness < 0 || brightness > 1) throw Error("fill_color: bad attribute");
  auto c = kPalette[color];
  if (brightness == 0)
    for (auto& v : c) v = static_cast<std::uint8_t>(std::lround(v * kDarkFactor));
  return c;
}

SilhouetteMask silhouette_template(int id) {
  if (id < 0 || id >= kNumShapeTemplates) throw Error("silhouette template id out of range");
  return build_shape(id / 6, (id / 2) % 3, id % 2);
}

Rendered render_garment(const AttributeVector& attrs) {
  Rendered r;
  r.silhouette = build_shape(attrs.category(), attrs.sleeve(), attrs.hem());
  const auto fill = fill_color(attrs.color(), attrs.brightness());
  const auto accent = overlay_color(fill);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      std::array<std::uint8_t, 3> px = {kBackgroundLevel, kBackgroundLevel, kBackgroundLevel};
      if (r.silhouette.at(y, x)) {
        px = fill;
        bool mark = false;
        if (attrs.pattern() == 1) {
          mark = (y % kStripePeriod) < kStripeWidth;
        } else if (attrs.pattern() == 2) {
          const int dy = y % kDotPeriod - kDotPeriod / 2;
          const int dx = x % kDotPeriod - kDotPeriod / 2;
          mark = dx * dx + dy * dy <= kDotRadius2;
        }
        if (mark) px = accent;
      }
      for (int c = 0; c < 3; ++c) r.image.at(y, x, c) = from_byte(px[c]);
    }
  }
  return r;
}

torch::Tensor mask_tensor(const SilhouetteMask& m) {
  auto t = torch::empty({1, kImageSize, kImageSize}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (size_t i = 0; i < m.mask.size(); ++i) p[i] = m.mask[i] ? 1.0f : 0.0f;
  return t;
}

SilhouetteMask foreground_mask(const Image& img, float tolerance) {
  SilhouetteMask m;
  m.template_id = -1;
  const float bg = from_byte(kBackgroundLevel);
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      float diff = 0.0f;
      for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(img.at(y, x, c) - bg));
      m.mask[y * kImageSize + x] = diff > tolerance ? 1 : 0;
    }
  return m;
}

}  // namespace mred::synth
