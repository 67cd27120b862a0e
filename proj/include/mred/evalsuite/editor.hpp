#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "mred/codec/codec.hpp"
#include "mred/diffusion/generator.hpp"
#include "mred/diffusion/sampler.hpp"
#include "mred/encoders/encoders.hpp"

namespace mred::eval {

/// Image -> feature map used by every metric: [B,3,64,64] -> [B,d].
using Embedder = std::function<torch::Tensor(const torch::Tensor& images)>;

/// Global embeddings of the frozen dual encoder.
Embedder global_embedder(const enc::DualEncoder& encoder);

struct SampleOptions {
  diff::SamplerKind sampler = diff::SamplerKind::Ddpm;
  int steps = 50;
  /// Chain start. With init_from_reference the reference latent is noised to
  /// this timestep; otherwise the chain starts from pure Gaussian noise.
  int tau_start = 1000;
  bool init_from_reference = true;

  nlohmann::json to_json() const;
  static SampleOptions from_json(const nlohmann::json& j);
};

/// One round of text-guided editing over a batch. Row i of the result is a
/// function of row i of the inputs only.
class EditModel {
 public:
  virtual ~EditModel() = default;
  /// refs [B,3,64,64] in [-1,1]; one text, silhouette template id and seed per row.
  virtual torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>& texts,
                             const std::vector<int>& silhouettes, const std::vector<std::uint64_t>& seeds) const = 0;
};

/// codec -> condition (text tokens + reference patches) -> sampler -> decode.
class DiffusionEditor final : public EditModel {
 public:
  DiffusionEditor(const codec::Codec& codec, const enc::DualEncoder& encoder, const diff::Generator& generator,
                  SampleOptions options, int chunk = 100);
  torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>& texts,
                     const std::vector<int>& silhouettes, const std::vector<std::uint64_t>& seeds) const override;
  const SampleOptions& options() const { return options_; }

 private:
  torch::Tensor edit_chunk(const torch::Tensor& refs, const std::vector<std::string>& texts,
                           const std::vector<int>& silhouettes, const std::vector<std::uint64_t>& seeds) const;
  const codec::Codec* codec_;
  const enc::DualEncoder* encoder_;
  const diff::Generator* generator_;
  SampleOptions options_;
  int chunk_;
};

/// Ignores the text and returns the reference.
class EchoEditor final : public EditModel {
 public:
  torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>&, const std::vector<int>&,
                     const std::vector<std::uint64_t>&) const override {
    return refs.clone();
  }
};

/// Ignores every input but the seed: uniform noise images.
class RandomEditor final : public EditModel {
 public:
  torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>& texts,
                     const std::vector<int>& silhouettes, const std::vector<std::uint64_t>& seeds) const override;
};

}  // namespace mred::eval
