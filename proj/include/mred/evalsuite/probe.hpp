#pragma once

#include <vector>

#include <torch/torch.h>

#include "mred/evalsuite/editor.hpp"
#include "mred/synthdata/attributes.hpp"

namespace mred::eval {

/// All 432 canonical renders, [432,3,64,64], row i = AttributeVector::from_index(i).
const torch::Tensor& canonical_images();

/// Nearest canonical render (cosine in embedder space) -> its attributes.
/// Ties go to the lowest combination index.
class AttributeProbe {
 public:
  explicit AttributeProbe(Embedder embed);

  std::vector<synth::AttributeVector> probe(const torch::Tensor& images) const;
  synth::AttributeVector probe(const Image& image) const;

  /// Count of canonical renders probed back to their own attributes.
  int canonical_hits() const;

 private:
  Embedder embed_;
  torch::Tensor canon_;  // [432,d] unit rows
};

}  // namespace mred::eval
