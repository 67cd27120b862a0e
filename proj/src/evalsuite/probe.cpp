#include "mred/evalsuite/probe.hpp"

#include "mred/synthdata/render.hpp"

namespace mred::eval {

const torch::Tensor& canonical_images() {
  static const torch::Tensor images = [] {
    std::vector<Image> renders;
    for (int i = 0; i < synth::kNumCombinations; ++i)
      renders.push_back(synth::render_garment(synth::AttributeVector::from_index(i)).image);
    return stack_images(renders);
  }();
  return images;
}

namespace {

torch::Tensor embed_all(const Embedder& embed, const torch::Tensor& images) {
  std::vector<torch::Tensor> parts;
  for (int64_t s = 0; s < images.size(0); s += 128)
    parts.push_back(embed(images.slice(0, s, std::min<int64_t>(s + 128, images.size(0)))));
  auto e = torch::cat(parts).to(torch::kFloat64);
  return e / e.norm(2, 1, true).clamp_min(1e-12);
}

}  // namespace

AttributeProbe::AttributeProbe(Embedder embed) : embed_(std::move(embed)) {
  canon_ = embed_all(embed_, canonical_images());
}

std::vector<synth::AttributeVector> AttributeProbe::probe(const torch::Tensor& images) const {
  const auto sims = torch::matmul(embed_all(embed_, images), canon_.t());
  // argmax returns the first maximum, which is the lowest index on ties.
  const auto best = sims.argmax(1).contiguous();
  std::vector<synth::AttributeVector> out;
  for (int64_t i = 0; i < best.size(0); ++i)
    out.push_back(synth::AttributeVector::from_index(static_cast<int>(best[i].item<int64_t>())));
  return out;
}

synth::AttributeVector AttributeProbe::probe(const Image& image) const {
  return probe(to_tensor(image).unsqueeze(0)).at(0);
}

int AttributeProbe::canonical_hits() const {
  const auto got = probe(canonical_images());
  int hits = 0;
  for (int i = 0; i < synth::kNumCombinations; ++i) hits += got[i].index() == i;
  return hits;
}

}  // namespace mred::eval
