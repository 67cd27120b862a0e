#pragma once

// Training objectives. Every loss is a mean over batch rows of a per-row mean
// over latent elements.
//
//   single  || eps_target - eps_hat ||^2 with eps_target the eps whose one-step
//           reconstruction from z^x_tau is z^y_0
//   recon   the same with z^y on both sides and the null condition
//   multi   two rounds: one-step z0 estimate under T1, re-noised at an
//           independent tau2, second round under T2; penalised in z0 space.
//           Gradients reach the first round through the intermediate estimate.

#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "mred/diffusion/generator.hpp"
#include "mred/training/dataset.hpp"

namespace mred::train {

/// Per-row weight on the eps-space error. `eps` is the plain loss; `min_snr:G`
/// multiplies row i by min(SNR_i, G) / SNR_i, i.e. caps the implied z0-space
/// weight at G.
struct LossWeighting {
  enum class Kind { Eps, MinSnr };
  Kind kind = Kind::Eps;
  double gamma = 5.0;

  static LossWeighting parse(const std::string& s);
  std::string to_string() const;
  torch::Tensor weights(const torch::Tensor& taus, const diff::NoiseSchedule& s) const;
};

struct NoiseDraw {
  torch::Tensor taus;  // int64 [B], uniform in [1, T]
  torch::Tensor eps;   // [B,4,16,16]
};

NoiseDraw draw_noise(int64_t batch, const diff::NoiseSchedule& s, torch::Generator& gen);

/// (z^x_tau - sqrt(ab) z^y_0) / sqrt(1 - ab).
torch::Tensor eps_target(const torch::Tensor& zx_tau, const torch::Tensor& zy0, const torch::Tensor& taus,
                         const diff::NoiseSchedule& s);

torch::Tensor loss_single(const diff::Generator& g, const torch::Tensor& zx, const torch::Tensor& zy,
                          const torch::Tensor& cond, const torch::Tensor& pose, const NoiseDraw& d,
                          const LossWeighting& w = {});

torch::Tensor loss_recon(const diff::Generator& g, const torch::Tensor& zy, const torch::Tensor& pose,
                         const NoiseDraw& d, const LossWeighting& w = {});

/// All rows must be splittable. `second_round` (default: g) runs the second
/// prediction; passing a frozen copy isolates the first-round gradient path.
torch::Tensor loss_multi(const diff::Generator& g, const torch::Tensor& zx, const torch::Tensor& zy,
                         const torch::Tensor& cond1, const torch::Tensor& cond2, const torch::Tensor& pose,
                         const NoiseDraw& d1, const NoiseDraw& d2, const diff::Generator* second_round = nullptr);

struct LossBreakdown {
  double single = 0.0;
  double recon = 0.0;
  double multi = 0.0;  // 0 when no row is splittable or multi is off
  double lambda = 0.0;
  double total = 0.0;  // value of the optimised tensor: single + recon + lambda * multi
};

struct StepLoss {
  torch::Tensor total;  // carries gradients
  LossBreakdown parts;
};

/// single + recon, plus lambda * multi over the splittable rows when `with_multi`.
StepLoss compute_losses(const diff::Generator& g, const TrainBatch& b, double lambda, bool with_multi,
                        torch::Generator& gen, const LossWeighting& w = {});

}  // namespace mred::train
