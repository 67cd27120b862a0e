#include "mred/training/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <numeric>
#include <random>

#include "mred/common/tensor_hash.hpp"
#include "mred/training/lambda.hpp"

namespace mred::train {

nlohmann::json StepRecord::to_json() const {
  return {{"step", step},          {"epoch", epoch},     {"lr", lr},           {"lambda", loss.lambda},
          {"single", loss.single}, {"recon", loss.recon}, {"multi", loss.multi}, {"total", loss.total}};
}

namespace {

class CollapseGuard {
 public:
  CollapseGuard(int window, double factor) : window_(window), factor_(factor) {}

  /// Returns a diagnostic when the moving average exceeds factor x its running minimum.
  std::string update(double total, bool armed) {
    values_.push_back(total);
    sum_ += total;
    if (static_cast<int>(values_.size()) > window_) {
      sum_ -= values_.front();
      values_.pop_front();
    }
    if (static_cast<int>(values_.size()) < window_ || !armed) return {};
    const double avg = sum_ / window_;
    min_avg_ = std::min(min_avg_, avg);
    if (avg > factor_ * min_avg_)
      return "loss collapse: " + std::to_string(window_) + "-step average " + std::to_string(avg) + " exceeds " +
             std::to_string(factor_) + "x its minimum " + std::to_string(min_avg_);
    return {};
  }

 private:
  int window_;
  double factor_;
  std::deque<double> values_;
  double sum_ = 0.0;
  double min_avg_ = std::numeric_limits<double>::infinity();
};

}  // namespace

TrainSummary train(diff::Generator& g, const FeatureBank& bank, const std::vector<synth::TripletSpec>& data,
                   const TrainConfig& cfg, std::ostream* metrics, const std::function<void(const StepRecord&)>& on_step) {
  if (data.empty()) throw Error("empty training set");
  const bool finetune = cfg.stage == Stage::Finetune;
  if (finetune) {
    if (g.stage() != "base") throw Error("finetune requires a generator trained by the base stage");
    g.insert_lora(cfg.seed);
    g.freeze_base();
  } else if (g.has_lora()) {
    throw Error("base stage expects a generator without LoRA");
  }
  const auto base_hash = g.base_hash();
  const auto weighting = LossWeighting::parse(cfg.loss_weighting);

  auto params = g.trainable_parameters();
  torch::optim::AdamW opt(params, torch::optim::AdamWOptions(cfg.learning_rate)
                                      .betas({cfg.beta1, cfg.beta2})
                                      .weight_decay(cfg.weight_decay));

  const int batch = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
  const int per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<int>((data.size() + batch - 1) / batch);
  TrainSummary out;
  out.total_steps = per_epoch * cfg.epochs;
  const int warmup = static_cast<int>(std::ceil(cfg.warmup_fraction * out.total_steps));

  std::mt19937_64 rng(cfg.seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::string stage_name = to_string(cfg.stage);
  std::string ckpt_path;
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    ckpt_path = (std::filesystem::path(cfg.checkpoint_dir) / (stage_name + "_last.ckpt")).string();
  }
  CollapseGuard guard(cfg.collapse_window, cfg.collapse_factor);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < per_epoch; ++i, ++step) {
      std::vector<std::size_t> idx;
      while (static_cast<int>(idx.size()) < batch) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        idx.push_back(order[cursor++]);
      }
      const auto b = make_batch(bank, data, idx, rng);
      const double lr = learning_rate_at(step, out.total_steps, cfg);
      for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
      const double lambda = finetune ? lambda_at(step, out.total_steps, cfg.lambda) : 0.0;

      auto loss = compute_losses(g, b, lambda, finetune, gen, weighting);
      if (!std::isfinite(loss.parts.total))
        throw TrainingAborted("non-finite loss at step " + std::to_string(step), out.last_checkpoint);
      opt.zero_grad();
      loss.total.backward();
      opt.step();

      StepRecord rec{step, epoch, lr, loss.parts};
      if (step % std::max(1, cfg.log_every) == 0) {
        out.log.push_back(rec);
        if (metrics) *metrics << rec.to_json().dump() << '\n';
      }
      if (on_step) on_step(rec);
      if (auto diag = guard.update(loss.parts.total, step >= warmup); !diag.empty())
        throw TrainingAborted(diag + " at step " + std::to_string(step), out.last_checkpoint);
    }
    if (finetune && g.base_hash() != base_hash)
      throw TrainingAborted("frozen base weights changed during epoch " + std::to_string(epoch), out.last_checkpoint);
    g.set_stage(stage_name);
    if (!ckpt_path.empty()) {
      g.save(ckpt_path, {{"epoch", epoch}, {"step", step}, {"train_config", cfg.to_json()}});
      out.last_checkpoint = ckpt_path;
    }
    if (metrics) metrics->flush();
  }
  g.set_stage(stage_name);
  return out;
}

}  // namespace mred::train
