#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "mred/diffusion/generator.hpp"

namespace mred::diff {

enum class SamplerKind { Ddpm, Ddim };

std::string to_string(SamplerKind k);
SamplerKind parse_sampler(const std::string& s);

/// Timesteps visited by a chain starting at `tau_start` with `steps` model calls:
/// tau_start, ..., uniformly strided, strictly decreasing, each >= 1.
std::vector<int> strided_timesteps(int tau_start, int steps);

/// Per-sample noise source; item i draws from its own generator seeded with seeds[i],
/// so results do not depend on how samples are batched.
class NoiseSource {
 public:
  explicit NoiseSource(const std::vector<std::uint64_t>& seeds);
  /// [B, ...shape]
  torch::Tensor normal(torch::IntArrayRef shape);
  std::size_t size() const { return gens_.size(); }

 private:
  std::vector<torch::Generator> gens_;
};

/// (add_noise(zx, eps, tau_start), tau_start) with eps drawn from `noise`.
std::pair<torch::Tensor, int> init_from_reference(const torch::Tensor& zx, int tau_start, NoiseSource& noise,
                                                  const NoiseSchedule& s);

/// Runs the reverse chain from (z_init at tau_start) to a z0 estimate.
/// DDPM visits every timestep when steps >= tau_start, otherwise the strided
/// ancestral chain; DDIM (eta = 0) always uses the strided chain.
torch::Tensor sample(const torch::Tensor& z_init, int tau_start, const torch::Tensor& cond, const torch::Tensor& pose,
                     const Generator& g, SamplerKind sampler, int steps, NoiseSource& noise);

}  // namespace mred::diff
