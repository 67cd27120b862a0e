#include "mred/evalsuite/editor.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "mred/common/error.hpp"
#include "mred/encoders/condition.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::eval {

Embedder global_embedder(const enc::DualEncoder& encoder) {
  return [&encoder](const torch::Tensor& images) { return encoder.encode_image(images).global; };
}

nlohmann::json SampleOptions::to_json() const {
  return {{"sampler", diff::to_string(sampler)},
          {"steps", steps},
          {"tau_start", tau_start},
          {"init_from_reference", init_from_reference}};
}

SampleOptions SampleOptions::from_json(const nlohmann::json& j) {
  SampleOptions o;
  if (j.contains("sampler")) o.sampler = diff::parse_sampler(j.at("sampler").get<std::string>());
  o.steps = j.value("steps", o.steps);
  o.tau_start = j.value("tau_start", o.tau_start);
  o.init_from_reference = j.value("init_from_reference", o.init_from_reference);
  return o;
}

namespace {

void check_rows(const torch::Tensor& refs, std::size_t texts, std::size_t sils, std::size_t seeds) {
  if (refs.dim() != 4 || refs.size(1) != 3 || refs.size(2) != kImageSize || refs.size(3) != kImageSize)
    throw Error("edit: references must be [B,3,64,64]");
  const auto b = static_cast<std::size_t>(refs.size(0));
  if (texts != b || sils != b || seeds != b) throw Error("edit: one text, silhouette and seed per reference");
}

}  // namespace

DiffusionEditor::DiffusionEditor(const codec::Codec& codec, const enc::DualEncoder& encoder,
                                 const diff::Generator& generator, SampleOptions options, int chunk)
    : codec_(&codec), encoder_(&encoder), generator_(&generator), options_(options), chunk_(std::max(1, chunk)) {
  generator.schedule().check_tau(options_.tau_start);
  if (options_.steps < 1) throw Error("steps must be >= 1");
}

torch::Tensor DiffusionEditor::edit(const torch::Tensor& refs, const std::vector<std::string>& texts,
                                    const std::vector<int>& silhouettes,
                                    const std::vector<std::uint64_t>& seeds) const {
  check_rows(refs, texts.size(), silhouettes.size(), seeds.size());
  const int64_t b = refs.size(0);
  if (b <= chunk_) return edit_chunk(refs, texts, silhouettes, seeds);
  std::vector<torch::Tensor> parts;
  for (int64_t s = 0; s < b; s += chunk_) {
    const int64_t e = std::min<int64_t>(b, s + chunk_);
    auto sub = [&](const auto& v) { return std::vector(v.begin() + s, v.begin() + e); };
    parts.push_back(edit_chunk(refs.slice(0, s, e), sub(texts), sub(silhouettes), sub(seeds)));
  }
  return torch::cat(parts);
}

torch::Tensor DiffusionEditor::edit_chunk(const torch::Tensor& refs, const std::vector<std::string>& texts,
                                          const std::vector<int>& silhouettes,
                                          const std::vector<std::uint64_t>& seeds) const {
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> masks;
  for (int id : silhouettes) masks.push_back(synth::mask_tensor(synth::silhouette_template(id)));
  const auto pose = torch::stack(masks);
  const auto cond =
      enc::build_condition_batch(encoder_->encode_text(texts).tokens, encoder_->encode_image(refs).patches);
  diff::NoiseSource noise(seeds);
  const auto zx = codec_->encode(refs);
  torch::Tensor z;
  if (options_.init_from_reference)
    z = diff::init_from_reference(zx, options_.tau_start, noise, generator_->schedule()).first;
  else
    z = noise.normal(zx.sizes().slice(1));
  auto z0 = diff::sample(z, options_.tau_start, cond, pose, *generator_, options_.sampler, options_.steps, noise);
  return codec_->decode(z0);
}

torch::Tensor RandomEditor::edit(const torch::Tensor& refs, const std::vector<std::string>& texts,
                                 const std::vector<int>& silhouettes, const std::vector<std::uint64_t>& seeds) const {
  check_rows(refs, texts.size(), silhouettes.size(), seeds.size());
  std::vector<torch::Tensor> out;
  for (auto s : seeds) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(s);
    out.push_back(torch::rand({3, kImageSize, kImageSize}, gen) * 2 - 1);
  }
  return torch::stack(out);
}

}  // namespace mred::eval
