#include "mred/diffusion/sampler.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "mred/common/error.hpp"

namespace mred::diff {

std::string to_string(SamplerKind k) { return k == SamplerKind::Ddpm ? "ddpm" : "ddim"; }

SamplerKind parse_sampler(const std::string& s) {
  if (s == "ddpm") return SamplerKind::Ddpm;
  if (s == "ddim") return SamplerKind::Ddim;
  throw Error("unknown sampler '" + s + "' (expected ddpm or ddim)");
}

std::vector<int> strided_timesteps(int tau_start, int steps) {
  if (tau_start < 1) throw Error("tau_start must be >= 1");
  if (steps < 1) throw Error("steps must be >= 1");
  steps = std::min(steps, tau_start);
  std::vector<int> taus;
  for (int i = 0; i < steps; ++i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(tau_start) * (steps - i) / steps));
    if (taus.empty() || t < taus.back()) taus.push_back(std::max(1, t));
  }
  return taus;
}

NoiseSource::NoiseSource(const std::vector<std::uint64_t>& seeds) {
  for (auto s : seeds) gens_.push_back(at::make_generator<at::CPUGeneratorImpl>(s));
}

torch::Tensor NoiseSource::normal(torch::IntArrayRef shape) {
  std::vector<torch::Tensor> parts;
  parts.reserve(gens_.size());
  for (auto& g : gens_) parts.push_back(torch::randn(shape, g, torch::kFloat32));
  return torch::stack(parts);
}

std::pair<torch::Tensor, int> init_from_reference(const torch::Tensor& zx, int tau_start, NoiseSource& noise,
                                                  const NoiseSchedule& s) {
  s.check_tau(tau_start);
  if (static_cast<std::size_t>(zx.size(0)) != noise.size()) throw Error("one noise seed per latent required");
  auto eps = noise.normal(zx.sizes().slice(1));
  return {add_noise(zx, eps, tau_start, s), tau_start};
}

torch::Tensor sample(const torch::Tensor& z_init, int tau_start, const torch::Tensor& cond, const torch::Tensor& pose,
                     const Generator& g, SamplerKind sampler, int steps, NoiseSource& noise) {
  const auto& s = g.schedule();
  s.check_tau(tau_start);
  if (static_cast<std::size_t>(z_init.size(0)) != noise.size()) throw Error("one noise seed per latent required");
  torch::NoGradGuard ng;
  const auto B = z_init.size(0);
  const auto taus = strided_timesteps(tau_start, steps);
  auto z = z_init;
  for (size_t i = 0; i < taus.size(); ++i) {
    const int tau = taus[i];
    const int prev = i + 1 < taus.size() ? taus[i + 1] : 0;
    auto eps = g.predict_eps(z, torch::full({B}, tau, torch::kInt64), cond, pose);
    if (sampler == SamplerKind::Ddim) {
      z = ddim_step(z, tau, prev, eps, s);
    } else {
      // Noise is drawn every step (also the last) so the stream stays aligned.
      auto n = noise.normal(z.sizes().slice(1));
      z = ancestral_step(z, tau, prev, eps, n, s);
    }
  }
  return z;
}

}  // namespace mred::diff
