#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include <torch/torch.h>

#include <doctest.h>

#include "helpers.hpp"
#include "mred/codec/codec.hpp"
#include "mred/common/error.hpp"
#include "mred/encoders/condition.hpp"
#include "mred/synthdata/render.hpp"
#include "mred/synthdata/triplet.hpp"
#include "mred/training/lambda.hpp"
#include "mred/training/losses.hpp"
#include "mred/training/trainer.hpp"

using namespace mred;
using namespace mred::train;

namespace {

double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

const FeatureBank& shared_bank() {
  static const codec::Codec codec(1);
  static const enc::DualEncoder encoder(enc::Vocabulary::from_grammar(), 1);
  static const FeatureBank bank(codec, encoder);
  return bank;
}

torch::Tensor poses(int64_t b) {
  std::vector<torch::Tensor> m;
  for (int64_t i = 0; i < b; ++i) m.push_back(synth::mask_tensor(synth::silhouette_template(i % 12)));
  return torch::stack(m);
}

NoiseDraw fixed_draw(int64_t b, std::uint64_t seed) {
  torch::manual_seed(seed);
  return {torch::randint(1, 1001, {b}, torch::kInt64), torch::randn({b, 4, 16, 16})};
}

void zero_weights(diff::Generator& g) {
  torch::NoGradGuard ng;
  for (auto& p : g.net()->parameters()) p.zero_();
}

TrainConfig tiny_config(Stage stage, std::uint64_t seed) {
  TrainConfig c;
  c.stage = stage;
  c.seed = seed;
  c.epochs = 2;
  c.steps_per_epoch = 2;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("eps-space loss matches the posterior-mean difference up to k(tau)") {
  diff::NoiseSchedule s;
  torch::manual_seed(20);
  for (int i = 0; i < 10; ++i) {
    const int tau = 1 + static_cast<int>(torch::randint(1000, {1}).item<int64_t>());
    auto zt = torch::randn({1, 4, 16, 16}, torch::kFloat64);
    auto ea = torch::randn_like(zt), eb = torch::randn_like(zt);
    // Textbook form of the posterior mean written directly in eps.
    const double beta = s.beta(tau), alpha = 1.0 - beta, ab = s.alpha_bar(tau);
    auto mu = [&](const torch::Tensor& e) { return (zt - beta / std::sqrt(1.0 - ab) * e) / std::sqrt(alpha); };
    const double k_closed = beta * beta / (alpha * (1.0 - ab));
    CHECK(diff::posterior_mean_eps_factor(tau, s) == doctest::Approx(k_closed).epsilon(1e-9));

    auto via_x0 = [&](const torch::Tensor& e) {
      return s.posterior_coef_x0(tau) * diff::x0_from_eps(zt, tau, e, s) + s.posterior_coef_zt(tau) * zt;
    };
    CHECK(max_abs(via_x0(ea) - mu(ea)) < 1e-9);
    const double ratio = (via_x0(ea) - via_x0(eb)).pow(2).sum().item<double>() / (ea - eb).pow(2).sum().item<double>();
    CHECK(std::abs(ratio - diff::posterior_mean_eps_factor(tau, s)) <= 1e-5 * diff::posterior_mean_eps_factor(tau, s));

    // The z0-space form used by the two-round loss carries (1 - ab) / ab.
    auto taus = torch::full({1}, tau, torch::kInt64);
    auto z0 = torch::randn_like(zt);
    auto target = diff::eps_from_x0(zt, taus, z0, s);
    const double x0_err = (z0 - diff::x0_from_eps(zt, taus, ea, s)).pow(2).sum().item<double>();
    const double eps_err = (target - ea).pow(2).sum().item<double>();
    CHECK(x0_err == doctest::Approx((1.0 - ab) / ab * eps_err).epsilon(1e-8));
  }
}

TEST_CASE("single and recon losses") {
  diff::Generator g(testing::tiny_generator(), 21);
  const auto& s = g.schedule();
  auto d = fixed_draw(4, 22);
  auto zx = torch::randn({4, 4, 16, 16}), zy = torch::randn({4, 4, 16, 16});
  auto cond = torch::randn({4, 32, 128});
  auto pose = poses(4);

  auto zx_tau = diff::add_noise(zx, d.eps, d.taus, s);
  CHECK(max_abs(eps_target(zx_tau, zx, d.taus, s) - d.eps) < 1e-4);

  // Degenerate triplet: the target is the drawn noise, so the loss is the plain denoising error.
  auto plain = (g.predict_eps(zx_tau, d.taus, cond, pose) - d.eps).pow(2).mean();
  CHECK(loss_single(g, zx, zx, cond, pose, d).item<double>() == doctest::Approx(plain.item<double>()).epsilon(1e-4));

  CHECK(torch::equal(loss_recon(g, zy, pose, d), loss_single(g, zy, zy, enc::null_condition_batch(4), pose, d)));

  // A zero network regresses z0 = 0, which is exactly right for zero targets.
  diff::Generator cheat(testing::tiny_generator(), 23);
  zero_weights(cheat);
  auto zeros = torch::zeros_like(zy);
  CHECK(loss_single(cheat, zx, zeros, cond, pose, d).item<double>() == 0.0);
  CHECK(loss_recon(cheat, zeros, pose, d).item<double>() == 0.0);
  CHECK(loss_multi(cheat, zx, zeros, cond, cond, pose, d, fixed_draw(4, 24)).item<double>() <= 1e-12);
}

TEST_CASE("recon loss Monte-Carlo decomposition at init") {
  diff::Generator g(testing::tiny_generator(), 25);
  torch::NoGradGuard ng;
  const int64_t n = 256;
  torch::manual_seed(26);
  auto zy = torch::randn({1, 4, 16, 16}).expand({n, 4, 16, 16}).contiguous();
  auto pose = poses(n);
  auto d = fixed_draw(n, 27);
  const double loss = loss_recon(g, zy, pose, d).item<double>();
  auto eps_hat = g.predict_eps(diff::add_noise(zy, d.eps, d.taus, g.schedule()), d.taus,
                               enc::null_condition_batch(n), pose);
  // E||eps - eps_hat||^2 = 1 + E eps_hat^2 - 2 E[eps eps_hat]; eps_hat depends on eps through z_tau.
  const double expect = 1.0 + eps_hat.pow(2).mean().item<double>() - 2.0 * (d.eps * eps_hat).mean().item<double>();
  CHECK(std::abs(loss - expect) < 0.02);
}

TEST_CASE("two-round loss reaches first-round parameters") {
  diff::Generator g(testing::tiny_generator(), 28);
  g.insert_lora(1);
  g.freeze_base();
  auto frozen = g.clone();
  frozen.freeze_all();
  auto d1 = fixed_draw(3, 29), d2 = fixed_draw(3, 30);
  auto zx = torch::randn({3, 4, 16, 16}), zy = torch::randn({3, 4, 16, 16});
  auto c1 = torch::randn({3, 32, 128}), c2 = torch::randn({3, 32, 128});
  auto loss = loss_multi(g, zx, zy, c1, c2, poses(3), d1, d2, &frozen);
  loss.backward();
  double norm = 0.0;
  for (const auto& p : g.lora_parameters())
    if (p.grad().defined()) norm += p.grad().pow(2).sum().item<double>();
  CHECK(norm > 0.0);
  for (const auto& p : frozen.lora_parameters()) CHECK_FALSE(p.grad().defined());
  for (const auto& p : g.net()->base_parameters()) CHECK_FALSE(p.grad().defined());
}

TEST_CASE("compute_losses bookkeeping") {
  diff::Generator g(testing::tiny_generator(), 31);
  std::mt19937_64 rng(1);
  std::vector<synth::TripletSpec> data;
  for (int i = 0; i < 4; ++i) data.push_back(synth::sample_triplet_spec(rng, 1));
  auto b = make_batch(shared_bank(), data, {0, 1, 2, 3}, rng);
  CHECK(b.split_rows.numel() == 0);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  auto l = compute_losses(g, b, 1.0, true, gen);
  CHECK(l.parts.multi == 0.0);
  CHECK(l.parts.total == doctest::Approx(l.parts.single + l.parts.recon));

  data.clear();
  for (int i = 0; i < 4; ++i) data.push_back(synth::sample_triplet_spec(rng, 1 + i % 3));
  b = make_batch(shared_bank(), data, {0, 1, 2, 3}, rng);
  CHECK(b.split_rows.numel() == 2);
  CHECK(b.cond1.size(0) == 2);
  l = compute_losses(g, b, 0.25, true, gen);
  CHECK(l.parts.multi > 0.0);
  CHECK(l.parts.total == doctest::Approx(l.parts.single + l.parts.recon + 0.25 * l.parts.multi).epsilon(1e-6));
  CHECK(l.total.item<double>() == doctest::Approx(l.parts.total).epsilon(1e-5));
}

TEST_CASE("lambda schedules and parsing") {
  const auto down = LambdaSchedule::parse("down");
  CHECK(lambda_at(0, 100, down) == 1.0);
  CHECK(lambda_at(50, 100, down) == 0.5);
  CHECK(lambda_at(100, 100, down) == 0.0);
  CHECK(lambda_at(0, 100, LambdaSchedule::parse("up")) == 0.0);
  CHECK(lambda_at(100, 100, LambdaSchedule::parse("linear_up")) == 1.0);
  CHECK(lambda_at(37, 100, LambdaSchedule::parse("fix:0")) == 0.0);
  CHECK(lambda_at(37, 100, LambdaSchedule::parse("fixed:1")) == 1.0);
  CHECK_THROWS_AS(LambdaSchedule::parse("fix:2"), Error);
  CHECK_THROWS_AS(LambdaSchedule::parse("sideways"), Error);
  CHECK_THROWS_AS(lambda_at(0, 0, down), Error);
  for (int i = 1; i <= 100; ++i) CHECK(lambda_at(i, 100, down) <= lambda_at(i - 1, 100, down));
  CHECK(LambdaSchedule::parse(LambdaSchedule::parse("fix:0.5").to_string()).value == 0.5);
}

TEST_CASE("train config and learning rate schedule") {
  auto c = TrainConfig::from_json(nlohmann::json{{"learning_rate", 1.0}, {"lambda", "fix:1"}, {"stage", "finetune"}});
  CHECK(c.learning_rate == 1.0);
  CHECK(c.beta1 == 0.95);
  CHECK(c.beta2 == 0.99);
  CHECK(c.epochs == 200);
  CHECK(c.stage == Stage::Finetune);
  CHECK(c.lambda.kind == LambdaSchedule::Kind::Fixed);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS(TrainConfig::from_json(nlohmann::json{{"stage", "pretrain"}}));
  CHECK(LossWeighting::parse("min_snr:5").gamma == 5.0);
  CHECK_THROWS_AS(LossWeighting::parse("l1"), Error);

  CHECK(learning_rate_at(0, 100, c) == doctest::Approx(0.1));
  CHECK(learning_rate_at(9, 100, c) == doctest::Approx(1.0));
  CHECK(learning_rate_at(10, 100, c) == doctest::Approx(1.0));
  CHECK(learning_rate_at(55, 100, c) == doctest::Approx(0.5));
  CHECK(learning_rate_at(100, 100, c) == doctest::Approx(0.0));
}

TEST_CASE("min-SNR weights cap the implied z0 weight") {
  diff::NoiseSchedule s;
  auto taus = torch::tensor({1, 200, 500, 1000}, torch::kInt64);
  auto w = LossWeighting::parse("min_snr:5").weights(taus, s);
  for (int i = 0; i < 4; ++i) {
    const double ab = s.alpha_bar(static_cast<int>(taus[i].item<int64_t>()));
    const double snr = ab / (1 - ab);
    CHECK(w[i].item<double>() == doctest::Approx(std::min(snr, 5.0) / snr).epsilon(1e-5));
  }
  CHECK(torch::equal(LossWeighting{}.weights(taus, s), torch::ones({4})));
}

TEST_CASE("training is reproducible and keeps the base frozen in finetune") {
  std::mt19937_64 rng(2);
  std::vector<synth::TripletSpec> data;
  for (int i = 0; i < 12; ++i) data.push_back(synth::sample_triplet_spec(rng, 1 + i % 3));
  testing::TempDir dir;

  auto run_base = [&](std::ostream* log) {
    diff::Generator g(testing::tiny_generator(), 40);
    auto cfg = tiny_config(Stage::Base, 41);
    cfg.checkpoint_dir = dir.file("base");
    train::train(g, shared_bank(), data, cfg, log);
    return g;
  };
  std::ostringstream log_a, log_b;
  auto g = run_base(&log_a);
  auto g2 = run_base(&log_b);
  CHECK(log_a.str() == log_b.str());
  CHECK(g.hash() == g2.hash());
  CHECK(g.stage() == "base");
  CHECK(std::filesystem::exists(dir.file("base/base_last.ckpt")));

  diff::Generator fresh(testing::tiny_generator(), 42);
  CHECK_THROWS_AS(train::train(fresh, shared_bank(), data, tiny_config(Stage::Finetune, 1)), Error);

  const auto base_hash = g.base_hash();
  auto cfg = tiny_config(Stage::Finetune, 43);
  cfg.epochs = 3;
  auto summary = train::train(g, shared_bank(), data, cfg);
  CHECK(g.has_lora());
  CHECK(g.stage() == "finetune");
  CHECK(g.base_hash() == base_hash);
  REQUIRE(summary.log.size() == 6);
  CHECK(summary.log.front().loss.lambda == 1.0);
  double prev = 2.0;
  for (const auto& r : summary.log) {
    CHECK(r.loss.total == doctest::Approx(r.loss.single + r.loss.recon + r.loss.lambda * r.loss.multi).epsilon(1e-6));
    CHECK(r.loss.lambda <= prev);
    prev = r.loss.lambda;
  }
  CHECK_THROWS_AS(train::train(g, shared_bank(), data, tiny_config(Stage::Base, 1)), Error);
}

TEST_CASE("non-finite loss aborts with the last good checkpoint") {
  codec::Codec codec(2);
  enc::DualEncoder encoder(enc::Vocabulary::from_grammar(), 2);
  FeatureBank bank(codec, encoder);
  std::mt19937_64 rng(3);
  std::vector<synth::TripletSpec> data;
  for (int i = 0; i < 8; ++i) data.push_back(synth::sample_triplet_spec(rng, 1));
  testing::TempDir dir;
  diff::Generator g(testing::tiny_generator(), 44);
  auto cfg = tiny_config(Stage::Base, 45);
  cfg.epochs = 3;
  cfg.checkpoint_dir = dir.path.string();
  auto poison = [&](const StepRecord& r) {
    if (r.step == 1) bank.latents.fill_(std::numeric_limits<float>::quiet_NaN());
  };
  try {
    train::train(g, bank, data, cfg, nullptr, poison);
    FAIL("expected an abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.last_good() == dir.file("base_last.ckpt"));
    auto saved = diff::Generator::load(e.last_good());
    for (const auto& p : saved.net()->parameters()) CHECK(torch::isfinite(p).all().item<bool>());
  }
}
