#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mred/common/image.hpp"
#include "mred/encoders/encoders.hpp"

namespace mred::enc {

struct ContrastiveConfig {
  int steps = 1500;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Symmetric InfoNCE over in-batch (image, caption) pairs with a learned
/// temperature. Freezes the encoder on completion. Throws for batch size < 2.
DualEncoder train_contrastive(const std::vector<Image>& images, const std::vector<std::string>& captions,
                              const ContrastiveConfig& cfg,
                              const std::function<void(int, double)>& on_log = {});

/// Top-1 caption->image accuracy over `num_batches` shuffled batches of `batch_size` pairs.
struct RetrievalStats {
  double mean_accuracy = 0.0;
  std::vector<double> batch_accuracy;
};
RetrievalStats in_batch_retrieval(const DualEncoder& enc, const std::vector<Image>& images,
                                  const std::vector<std::string>& captions, int batch_size, std::uint64_t seed,
                                  int num_batches);

}  // namespace mred::enc
