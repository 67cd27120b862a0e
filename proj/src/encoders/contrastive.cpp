#include "mred/encoders/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mred/common/error.hpp"

namespace mred::enc {

DualEncoder train_contrastive(const std::vector<Image>& images, const std::vector<std::string>& captions,
                              const ContrastiveConfig& cfg, const std::function<void(int, double)>& on_log) {
  if (cfg.batch_size < 2) throw Error("contrastive training needs batch size >= 2");
  if (images.size() != captions.size() || images.size() < 2) throw Error("need at least two (image, caption) pairs");
  DualEncoder enc(Vocabulary::from_grammar(), cfg.seed);
  enc.net()->train();
  const auto data = stack_images(images);
  std::vector<TokenSequence> tokens;
  for (const auto& c : captions) tokens.push_back(enc.tokenize(c));

  torch::optim::AdamW opt(enc.net()->parameters(), torch::optim::AdamWOptions(cfg.learning_rate).weight_decay(1e-4));
  std::mt19937_64 rng(cfg.seed);
  std::vector<int64_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();
  const int64_t B = std::min<int64_t>(cfg.batch_size, static_cast<int64_t>(images.size()));

  for (int step = 0; step < cfg.steps; ++step) {
    const double t = static_cast<double>(step) / std::max(1, cfg.steps - 1);
    const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * t));
    for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(g.options()).lr(lr);

    std::vector<int64_t> idx;
    std::vector<TokenSequence> seqs;
    for (int64_t i = 0; i < B; ++i) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor]);
      seqs.push_back(tokens[order[cursor]]);
      ++cursor;
    }
    auto img = enc.image_forward(data.index_select(0, torch::tensor(idx, torch::kInt64)));
    auto txt = enc.text_forward(seqs);
    auto scale = enc.net()->log_inv_temperature.clamp(0.0, std::log(100.0)).exp();
    auto logits = scale * torch::matmul(txt.global, img.global.t());
    auto labels = torch::arange(B, torch::kInt64);
    auto loss = 0.5 * (torch::cross_entropy_loss(logits, labels) + torch::cross_entropy_loss(logits.t(), labels));
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double l = loss.item<double>();
    if (!std::isfinite(l)) throw Error("contrastive training diverged");
    if (on_log && (step % 100 == 0 || step + 1 == cfg.steps)) on_log(step, l);
  }
  enc.freeze();
  return enc;
}

RetrievalStats in_batch_retrieval(const DualEncoder& enc, const std::vector<Image>& images,
                                  const std::vector<std::string>& captions, int batch_size, std::uint64_t seed,
                                  int num_batches) {
  if (images.size() != captions.size() || static_cast<int>(images.size()) < batch_size)
    throw Error("in_batch_retrieval: need at least batch_size pairs");
  const auto img = enc.encode_image(images).global;
  const auto txt = enc.encode_text(captions).global;
  std::mt19937_64 rng(seed);
  std::vector<int64_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  RetrievalStats stats;
  for (int b = 0; b < num_batches; ++b) {
    std::shuffle(order.begin(), order.end(), rng);
    auto idx = torch::tensor(std::vector<int64_t>(order.begin(), order.begin() + batch_size), torch::kInt64);
    auto sims = torch::matmul(txt.index_select(0, idx), img.index_select(0, idx).t());
    auto pred = sims.argmax(1);
    const double acc = (pred == torch::arange(batch_size, torch::kInt64)).to(torch::kFloat64).mean().item<double>();
    stats.batch_accuracy.push_back(acc);
  }
  stats.mean_accuracy =
      std::accumulate(stats.batch_accuracy.begin(), stats.batch_accuracy.end(), 0.0) / stats.batch_accuracy.size();
  return stats;
}

}  // namespace mred::enc
