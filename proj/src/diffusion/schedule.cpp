#include "mred/diffusion/schedule.hpp"

#include <cmath>

#include "mred/common/error.hpp"

namespace mred::diff {

NoiseSchedule::NoiseSchedule(int timesteps, double beta_start, double beta_end)
    : timesteps_(timesteps), beta_start_(beta_start), beta_end_(beta_end) {
  if (timesteps < 2) throw Error("schedule needs at least 2 timesteps");
  if (!(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0)) throw Error("schedule needs 0 < b1 < bT < 1");
  const auto n = static_cast<size_t>(timesteps) + 1;
  betas_.assign(n, 0.0);
  alpha_bars_.assign(n, 1.0);
  post_coef_x0_.assign(n, 0.0);
  post_coef_zt_.assign(n, 0.0);
  post_var_.assign(n, 0.0);
  for (int t = 1; t <= timesteps; ++t) {
    betas_[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / (timesteps - 1);
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t]);
    const double ab_prev = alpha_bars_[t - 1];
    const double one_minus_ab = 1.0 - alpha_bars_[t];
    post_coef_x0_[t] = betas_[t] * std::sqrt(ab_prev) / one_minus_ab;
    post_coef_zt_[t] = std::sqrt(1.0 - betas_[t]) * (1.0 - ab_prev) / one_minus_ab;
    post_var_[t] = betas_[t] * (1.0 - ab_prev) / one_minus_ab;
  }
  alpha_bar_table_ = torch::tensor(alpha_bars_, torch::kFloat64);
}

void NoiseSchedule::check_tau(int tau) const {
  if (tau < 1 || tau > timesteps_)
    throw Error("timestep " + std::to_string(tau) + " outside [1, " + std::to_string(timesteps_) + "]");
}

torch::Tensor NoiseSchedule::alpha_bar_at(const torch::Tensor& taus, torch::ScalarType dtype) const {
  require(taus.dtype() == torch::kInt64, "timesteps must be int64");
  if (taus.numel() > 0) {
    const auto lo = taus.min().item<int64_t>(), hi = taus.max().item<int64_t>();
    if (lo < 1 || hi > timesteps_) throw Error("timestep outside [1, T]");
  }
  return alpha_bar_table_.index_select(0, taus.flatten()).to(dtype);
}

namespace {

torch::Tensor broadcast(const torch::Tensor& per_sample, const torch::Tensor& like) {
  std::vector<int64_t> shape(like.dim(), 1);
  shape[0] = per_sample.size(0);
  return per_sample.to(like.scalar_type()).view(shape);
}

}  // namespace

torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, const torch::Tensor& taus,
                        const NoiseSchedule& s) {
  auto ab = broadcast(s.alpha_bar_at(taus, torch::kFloat64), z0);
  return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, int tau, const NoiseSchedule& s) {
  s.check_tau(tau);
  const double ab = s.alpha_bar(tau);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor x0_from_eps(const torch::Tensor& z_tau, const torch::Tensor& taus, const torch::Tensor& eps_hat,
                          const NoiseSchedule& s) {
  auto ab = broadcast(s.alpha_bar_at(taus, torch::kFloat64), z_tau);
  return (z_tau - (1.0 - ab).sqrt() * eps_hat) / ab.sqrt();
}

torch::Tensor x0_from_eps(const torch::Tensor& z_tau, int tau, const torch::Tensor& eps_hat, const NoiseSchedule& s) {
  s.check_tau(tau);
  const double ab = s.alpha_bar(tau);
  return (z_tau - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

torch::Tensor eps_from_x0(const torch::Tensor& z_tau, const torch::Tensor& taus, const torch::Tensor& z0,
                          const NoiseSchedule& s) {
  auto ab = broadcast(s.alpha_bar_at(taus, torch::kFloat64), z_tau);
  return (z_tau - ab.sqrt() * z0) / (1.0 - ab).sqrt();
}

torch::Tensor ancestral_step(const torch::Tensor& z_tau, int tau, int tau_prev, const torch::Tensor& eps_hat,
                             const torch::Tensor& noise, const NoiseSchedule& s) {
  s.check_tau(tau);
  if (tau_prev < 0 || tau_prev >= tau) throw Error("ancestral_step needs 0 <= tau_prev < tau");
  const double ab_t = s.alpha_bar(tau);
  const double ab_s = s.alpha_bar(tau_prev);
  const double alpha_eff = ab_t / ab_s;
  const double beta_eff = 1.0 - alpha_eff;
  const double coef_x0 = beta_eff * std::sqrt(ab_s) / (1.0 - ab_t);
  const double coef_zt = std::sqrt(alpha_eff) * (1.0 - ab_s) / (1.0 - ab_t);
  const double var = beta_eff * (1.0 - ab_s) / (1.0 - ab_t);
  auto x0 = x0_from_eps(z_tau, tau, eps_hat, s);
  auto mean = coef_x0 * x0 + coef_zt * z_tau;
  if (tau_prev == 0 || var <= 0.0) return mean;
  return mean + std::sqrt(var) * noise;
}

torch::Tensor ddpm_step(const torch::Tensor& z_tau, int tau, const torch::Tensor& eps_hat, const torch::Tensor& noise,
                        const NoiseSchedule& s) {
  return ancestral_step(z_tau, tau, tau - 1, eps_hat, noise, s);
}

torch::Tensor ddim_step(const torch::Tensor& z_tau, int tau, int tau_prev, const torch::Tensor& eps_hat,
                        const NoiseSchedule& s) {
  s.check_tau(tau);
  if (tau_prev < 0 || tau_prev > tau) throw Error("ddim_step needs 0 <= tau_prev <= tau");
  if (tau_prev == tau) return z_tau;
  auto x0 = x0_from_eps(z_tau, tau, eps_hat, s);
  if (tau_prev == 0) return x0;
  const double ab_prev = s.alpha_bar(tau_prev);
  return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

double posterior_mean_eps_factor(int tau, const NoiseSchedule& s) {
  s.check_tau(tau);
  const double c = s.posterior_coef_x0(tau) * std::sqrt((1.0 - s.alpha_bar(tau)) / s.alpha_bar(tau));
  return c * c;
}

}  // namespace mred::diff
