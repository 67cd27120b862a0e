#include "mred/training/losses.hpp"

#include <sstream>

#include "mred/common/error.hpp"
#include "mred/encoders/condition.hpp"

namespace mred::train {

namespace {

torch::Tensor row_mse(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).pow(2).flatten(1).mean(1); }

}  // namespace

LossWeighting LossWeighting::parse(const std::string& s) {
  LossWeighting w;
  if (s == "eps") return w;
  if (s.starts_with("min_snr:")) {
    w.kind = Kind::MinSnr;
    try {
      w.gamma = std::stod(s.substr(8));
    } catch (const std::exception&) {
      throw Error("bad gamma in '" + s + "'");
    }
    if (!(w.gamma > 0.0)) throw Error("min_snr gamma must be positive");
    return w;
  }
  throw Error("unknown loss weighting '" + s + "' (expected eps or min_snr:G)");
}

std::string LossWeighting::to_string() const {
  if (kind == Kind::Eps) return "eps";
  std::ostringstream os;
  os << "min_snr:" << gamma;
  return os.str();
}

torch::Tensor LossWeighting::weights(const torch::Tensor& taus, const diff::NoiseSchedule& s) const {
  auto ab = s.alpha_bar_at(taus);
  if (kind == Kind::Eps) return torch::ones_like(ab);
  auto snr = ab / (1 - ab);
  return torch::clamp_max(snr, gamma) / snr;
}

NoiseDraw draw_noise(int64_t batch, const diff::NoiseSchedule& s, torch::Generator& gen) {
  NoiseDraw d;
  d.taus = torch::randint(1, s.timesteps() + 1, {batch}, gen, torch::kInt64);
  d.eps = torch::randn({batch, 4, 16, 16}, gen, torch::kFloat32);
  return d;
}

torch::Tensor eps_target(const torch::Tensor& zx_tau, const torch::Tensor& zy0, const torch::Tensor& taus,
                         const diff::NoiseSchedule& s) {
  return diff::eps_from_x0(zx_tau, taus, zy0, s);
}

torch::Tensor loss_single(const diff::Generator& g, const torch::Tensor& zx, const torch::Tensor& zy,
                          const torch::Tensor& cond, const torch::Tensor& pose, const NoiseDraw& d,
                          const LossWeighting& w) {
  const auto& s = g.schedule();
  auto zx_tau = diff::add_noise(zx, d.eps, d.taus, s);
  auto target = eps_target(zx_tau, zy, d.taus, s);
  auto eps_hat = g.predict_eps(zx_tau, d.taus, cond, pose);
  return (w.weights(d.taus, s) * row_mse(target, eps_hat)).mean();
}

torch::Tensor loss_recon(const diff::Generator& g, const torch::Tensor& zy, const torch::Tensor& pose,
                         const NoiseDraw& d, const LossWeighting& w) {
  return loss_single(g, zy, zy, enc::null_condition_batch(zy.size(0)), pose, d, w);
}

torch::Tensor loss_multi(const diff::Generator& g, const torch::Tensor& zx, const torch::Tensor& zy,
                         const torch::Tensor& cond1, const torch::Tensor& cond2, const torch::Tensor& pose,
                         const NoiseDraw& d1, const NoiseDraw& d2, const diff::Generator* second_round) {
  const auto& s = g.schedule();
  const auto& g2 = second_round ? *second_round : g;
  auto zx_tau = diff::add_noise(zx, d1.eps, d1.taus, s);
  auto eps1 = g.predict_eps(zx_tau, d1.taus, cond1, pose);
  auto z_mid = diff::x0_from_eps(zx_tau, d1.taus, eps1, s);
  auto z_mid_tau = diff::add_noise(z_mid, d2.eps, d2.taus, s);
  auto eps2 = g2.predict_eps(z_mid_tau, d2.taus, cond2, pose);
  auto zy_hat = diff::x0_from_eps(z_mid_tau, d2.taus, eps2, s);
  return row_mse(zy, zy_hat).mean();
}

StepLoss compute_losses(const diff::Generator& g, const TrainBatch& b, double lambda, bool with_multi,
                        torch::Generator& gen, const LossWeighting& w) {
  const auto& s = g.schedule();
  const auto B = b.zx.size(0);
  // Draw order is fixed so runs are reproducible whether or not multi applies.
  const auto d_single = draw_noise(B, s, gen);
  const auto d_recon = draw_noise(B, s, gen);
  const auto d1 = draw_noise(B, s, gen);
  const auto d2 = draw_noise(B, s, gen);

  auto single = loss_single(g, b.zx, b.zy, b.cond, b.pose, d_single, w);
  auto recon = loss_recon(g, b.zy, b.pose, d_recon, w);
  StepLoss out;
  out.total = single + recon;
  out.parts.single = single.item<double>();
  out.parts.recon = recon.item<double>();
  out.parts.lambda = lambda;
  if (with_multi && b.split_rows.numel() > 0) {
    const auto& r = b.split_rows;
    auto sel = [&](const NoiseDraw& d) { return NoiseDraw{d.taus.index_select(0, r), d.eps.index_select(0, r)}; };
    auto run = [&] {
      return loss_multi(g, b.zx.index_select(0, r), b.zy.index_select(0, r), b.cond1, b.cond2,
                        b.pose.index_select(0, r), sel(d1), sel(d2));
    };
    if (lambda > 0.0) {
      auto multi = run();
      out.total = out.total + lambda * multi;
      out.parts.multi = multi.item<double>();
    } else {
      // Logged only; a zero weight contributes nothing to the gradient.
      torch::NoGradGuard ng;
      out.parts.multi = run().item<double>();
    }
  }
  // The optimised value, so the logged identity with the parts is a real check.
  out.parts.total = out.total.item<double>();
  return out;
}

}  // namespace mred::train
