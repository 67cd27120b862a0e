#pragma once

#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

#include "mred/codec/codec.hpp"
#include "mred/encoders/encoders.hpp"
#include "mred/synthdata/triplet.hpp"

namespace mred::train {

/// Frozen-model features of every canonical render, indexed by AttributeVector::index(),
/// plus the silhouette library. Every image in the toy dataset is a canonical render,
/// so training never touches pixels after this is built.
class FeatureBank {
 public:
  FeatureBank(const codec::Codec& codec, const enc::DualEncoder& encoder);

  torch::Tensor latents;  // [432,4,16,16]
  torch::Tensor patches;  // [432,16,128]
  torch::Tensor globals;  // [432,128]
  torch::Tensor masks;    // [12,1,64,64]

  /// Per-token text embeddings [16,128], memoized by string.
  torch::Tensor text(const std::string& s) const;
  /// [B,16,128]
  torch::Tensor texts(const std::vector<std::string>& s) const;

  const enc::DualEncoder& encoder() const { return *encoder_; }

 private:
  const enc::DualEncoder* encoder_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, torch::Tensor> text_cache_;
};

/// One latent-space training batch.
struct TrainBatch {
  torch::Tensor zx, zy;  // [B,4,16,16]
  torch::Tensor cond;    // [B,32,128] full instruction + reference patches
  torch::Tensor pose;    // [B,1,64,64] target silhouette
  // Two-round inputs for the splittable rows only.
  torch::Tensor split_rows;    // int64 [M]
  torch::Tensor cond1, cond2;  // [M,32,128]: T1 / T2 text + reference patches
};

/// Splits each multi-clause instruction with `rng`; single-clause rows are left out of split_rows.
TrainBatch make_batch(const FeatureBank& bank, const std::vector<synth::TripletSpec>& data,
                      const std::vector<std::size_t>& indices, std::mt19937_64& rng);

}  // namespace mred::train
