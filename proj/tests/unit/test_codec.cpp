#include <torch/torch.h>

#include <doctest.h>

#include "helpers.hpp"
#include "mred/codec/codec.hpp"
#include "mred/common/error.hpp"
#include "mred/synthdata/render.hpp"

using namespace mred;

namespace {

std::vector<Image> renders(int n, int stride = 7) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i)
    out.push_back(synth::render_garment(synth::AttributeVector::from_index((i * stride) % synth::kNumCombinations)).image);
  return out;
}

}  // namespace

TEST_CASE("codec shapes, clamping and determinism") {
  codec::Codec c(1);
  const auto imgs = stack_images(renders(3));
  const auto z = c.encode(imgs);
  CHECK(z.sizes() == torch::IntArrayRef({3, 4, 16, 16}));
  CHECK(torch::equal(z, c.encode(imgs)));
  const auto x = c.decode(torch::randn({2, 4, 16, 16}) * 50);
  CHECK(x.sizes() == torch::IntArrayRef({2, 3, 64, 64}));
  CHECK(x.max().item<float>() <= 1.0f);
  CHECK(x.min().item<float>() >= -1.0f);
  CHECK(torch::equal(c.decode(torch::zeros({1, 4, 16, 16})), c.decode(torch::zeros({1, 4, 16, 16}))));
}

TEST_CASE("psnr uses peak-to-peak 2") {
  auto a = torch::zeros({3, 64, 64});
  auto b = torch::full({3, 64, 64}, 0.1f);
  CHECK(codec::psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0 / 0.01)).epsilon(1e-6));
}

TEST_CASE("frozen codec refuses updates and survives save/load") {
  testing::TempDir dir;
  codec::Codec c(2);
  torch::optim::Adam opt(c.net()->parameters(), 1e-3);
  c.fit_batch(opt, stack_images(renders(4)));
  c.freeze(0.5f);
  CHECK_THROWS_WITH(c.fit_batch(opt, stack_images(renders(4))), "weights frozen");
  c.save(dir.file("codec.ckpt"));
  auto d = codec::Codec::load(dir.file("codec.ckpt"));
  CHECK(d.frozen());
  CHECK(d.latent_scale() == 0.5f);
  CHECK(d.hash() == c.hash());
  const auto imgs = stack_images(renders(2));
  CHECK(torch::equal(d.encode(imgs), c.encode(imgs)));
}

TEST_CASE("codec training is seeded and freezes") {
  codec::CodecTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const auto imgs = renders(40, 11);
  codec::CodecTrainResult r1;
  auto a = codec::train_codec(imgs, cfg, &r1);
  auto b = codec::train_codec(imgs, cfg);
  CHECK(a.frozen());
  CHECK(a.hash() == b.hash());
  CHECK(r1.epoch_loss.size() == 2);
  CHECK(a.latent_scale() > 0.0f);
}
