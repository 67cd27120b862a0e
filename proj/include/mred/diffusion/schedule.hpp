#pragma once

#include <vector>

#include <torch/torch.h>

namespace mred::diff {

inline constexpr int kDefaultTimesteps = 1000;

/// Linear-beta noise schedule, 1-indexed by timestep tau in [1, T].
/// All tables are double precision; index 0 holds the tau = 0 convention
/// (beta 0, alpha_bar 1).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int timesteps = kDefaultTimesteps, double beta_start = 1e-4, double beta_end = 0.02);

  int timesteps() const { return timesteps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  double beta(int tau) const { return betas_.at(tau); }
  double alpha(int tau) const { return 1.0 - betas_.at(tau); }
  double alpha_bar(int tau) const { return alpha_bars_.at(tau); }

  /// Posterior q(z_{tau-1} | z_tau, z_0) = N(coef_x0 * z_0 + coef_zt * z_tau, variance).
  double posterior_coef_x0(int tau) const { return post_coef_x0_.at(tau); }
  double posterior_coef_zt(int tau) const { return post_coef_zt_.at(tau); }
  double posterior_variance(int tau) const { return post_var_.at(tau); }

  /// Gathers alpha_bar for a batch of int64 timesteps -> tensor [B] of `dtype`.
  torch::Tensor alpha_bar_at(const torch::Tensor& taus, torch::ScalarType dtype = torch::kFloat32) const;

  void check_tau(int tau) const;

 private:
  int timesteps_;
  double beta_start_, beta_end_;
  std::vector<double> betas_, alpha_bars_, post_coef_x0_, post_coef_zt_, post_var_;
  torch::Tensor alpha_bar_table_;
};

inline NoiseSchedule make_schedule(int timesteps = kDefaultTimesteps) { return NoiseSchedule(timesteps); }

/// z_tau = sqrt(ab) z0 + sqrt(1 - ab) eps. `taus` is int64 [B]; z0/eps are [B,...].
torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, const torch::Tensor& taus,
                        const NoiseSchedule& s);
torch::Tensor add_noise(const torch::Tensor& z0, const torch::Tensor& eps, int tau, const NoiseSchedule& s);

/// One-step reparameterization: z0_hat = (z_tau - sqrt(1 - ab) eps_hat) / sqrt(ab).
torch::Tensor x0_from_eps(const torch::Tensor& z_tau, const torch::Tensor& taus, const torch::Tensor& eps_hat,
                          const NoiseSchedule& s);
torch::Tensor x0_from_eps(const torch::Tensor& z_tau, int tau, const torch::Tensor& eps_hat, const NoiseSchedule& s);

/// The eps for which x0_from_eps(z_tau, tau, eps) == z0: (z_tau - sqrt(ab) z0) / sqrt(1 - ab).
torch::Tensor eps_from_x0(const torch::Tensor& z_tau, const torch::Tensor& taus, const torch::Tensor& z0,
                          const NoiseSchedule& s);

/// Ancestral step tau -> tau - 1. `noise` is ignored at tau == 1.
torch::Tensor ddpm_step(const torch::Tensor& z_tau, int tau, const torch::Tensor& eps_hat, const torch::Tensor& noise,
                        const NoiseSchedule& s);
/// Ancestral step between arbitrary tau > tau_prev >= 0 (the posterior of the
/// respaced chain). Equals ddpm_step when tau_prev == tau - 1.
torch::Tensor ancestral_step(const torch::Tensor& z_tau, int tau, int tau_prev, const torch::Tensor& eps_hat,
                             const torch::Tensor& noise, const NoiseSchedule& s);
/// Deterministic (eta = 0) step. tau_prev == tau returns z_tau unchanged; tau_prev == 0 returns z0_hat.
torch::Tensor ddim_step(const torch::Tensor& z_tau, int tau, int tau_prev, const torch::Tensor& eps_hat,
                        const NoiseSchedule& s);

/// Scalar k(tau) with || mu(eps_a) - mu(eps_b) ||^2 == k(tau) || eps_a - eps_b ||^2, where mu is the
/// posterior mean of z_{tau-1} computed through x0_from_eps.
double posterior_mean_eps_factor(int tau, const NoiseSchedule& s);

}  // namespace mred::diff
