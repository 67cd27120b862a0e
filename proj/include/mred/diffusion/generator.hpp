#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "mred/diffusion/schedule.hpp"
#include "mred/diffusion/unet.hpp"
#include "mred/encoders/condition.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::diff {

inline constexpr int kGeneratorVersion = 1;

struct GeneratorConfig {
  UNetConfig unet;
  int lora_rank = 4;
  double lora_alpha = 4.0;  // alpha / rank = 1
  int timesteps = kDefaultTimesteps;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

/// The editing generator G: U-net + pose branch, optional LoRA, and its noise schedule.
/// The network regresses z0; predict_eps converts that estimate to the eps
/// parameterization the losses and samplers use.
class Generator {
 public:
  explicit Generator(GeneratorConfig cfg = {}, std::uint64_t seed = 0);

  /// z [B,4,16,16], taus int64 [B], cond [B,32,128], pose [B,1,64,64]. Throws mred::Error on bad shapes.
  torch::Tensor predict_eps(const torch::Tensor& z, const torch::Tensor& taus, const torch::Tensor& cond,
                            const torch::Tensor& pose) const;
  torch::Tensor predict_eps(const torch::Tensor& z, int tau, const enc::Condition& c,
                            const synth::SilhouetteMask& pose) const;

  /// Inserts rank-r adapters on Q/K/V of every decoder cross-attention (B = 0).
  void insert_lora(std::uint64_t seed);
  bool has_lora() const { return has_lora_; }

  /// Base (U-net + pose branch) weights stop receiving gradients.
  void freeze_base();
  bool base_frozen() const { return base_frozen_; }
  /// Everything frozen (serving).
  void freeze_all();

  /// Training lineage: "init", "base" or "finetune". Persisted in checkpoints.
  const std::string& stage() const { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

  std::vector<torch::Tensor> trainable_parameters() const;
  std::vector<torch::Tensor> lora_parameters() const { return net_->lora_parameters(); }

  std::uint64_t base_hash() const;
  std::uint64_t hash() const;

  const NoiseSchedule& schedule() const { return schedule_; }
  const GeneratorConfig& config() const { return cfg_; }
  UNet& net() const { return net_; }

  Generator clone() const;

  void save(const std::string& path, const nlohmann::json& extra = {}) const;
  static Generator load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  NoiseSchedule schedule_;
  mutable UNet net_{nullptr};
  bool has_lora_ = false;
  bool base_frozen_ = false;
  std::string stage_ = "init";
};

}  // namespace mred::diff
