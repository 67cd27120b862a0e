#include <cmath>

#include <torch/torch.h>

#include <doctest.h>

#include "helpers.hpp"
#include "mred/common/error.hpp"
#include "mred/diffusion/generator.hpp"
#include "mred/diffusion/sampler.hpp"
#include "mred/encoders/condition.hpp"
#include "mred/synthdata/render.hpp"

using namespace mred;
using namespace mred::diff;

namespace {

double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

struct GenInputs {
  torch::Tensor z, taus, cond, pose;
};

GenInputs random_inputs(int64_t b, std::uint64_t seed) {
  torch::manual_seed(seed);
  GenInputs in;
  in.z = torch::randn({b, 4, 16, 16});
  in.taus = torch::randint(1, 1001, {b}, torch::kInt64);
  in.cond = torch::randn({b, 32, 128});
  std::vector<torch::Tensor> masks;
  for (int64_t i = 0; i < b; ++i) masks.push_back(synth::mask_tensor(synth::silhouette_template(i % 12)));
  in.pose = torch::stack(masks);
  return in;
}

}  // namespace

TEST_CASE("schedule tables") {
  NoiseSchedule s;
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-12));
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 2; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(1000) < 0.01);

  long double ab = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
    CHECK(s.beta(t) == doctest::Approx(static_cast<double>(beta)).epsilon(1e-12));
    const long double prev = ab;
    ab *= 1.0L - beta;
    CHECK(s.alpha_bar(t) == doctest::Approx(static_cast<double>(ab)).epsilon(1e-10));
    const long double cx0 = beta * std::sqrt(prev) / (1.0L - ab);
    const long double czt = std::sqrt(1.0L - beta) * (1.0L - prev) / (1.0L - ab);
    const long double var = beta * (1.0L - prev) / (1.0L - ab);
    CHECK(s.posterior_coef_x0(t) == doctest::Approx(static_cast<double>(cx0)).epsilon(1e-9));
    CHECK(s.posterior_coef_zt(t) == doctest::Approx(static_cast<double>(czt)).epsilon(1e-9));
    CHECK(s.posterior_variance(t) == doctest::Approx(static_cast<double>(var)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(s.check_tau(0), Error);
  CHECK_THROWS_AS(s.check_tau(1001), Error);
}

TEST_CASE("add_noise closed forms and variance") {
  NoiseSchedule s;
  torch::manual_seed(1);
  auto z0 = torch::randn({2, 4, 16, 16});
  auto eps = torch::randn({2, 4, 16, 16});
  const int tau = 400;
  const double ab = s.alpha_bar(tau);
  CHECK(max_abs(add_noise(z0, torch::zeros_like(eps), tau, s) - std::sqrt(ab) * z0) < 1e-6);
  CHECK(max_abs(add_noise(torch::zeros_like(z0), eps, tau, s) - std::sqrt(1 - ab) * eps) < 1e-6);

  // Fixed z0 with element variance 4, 10 000 noise draws per element.
  auto base = 2.0 * torch::randn({1, 4, 16, 16});
  const double var_z0 = base.var().item<double>();
  auto draws = torch::randn({10000, 4, 16, 16});
  auto out = add_noise(base.expand({10000, 4, 16, 16}), draws, tau, s);
  // Per-element variance over draws plus the variance of the per-element means.
  const double total = out.var(0, false).mean().item<double>() + out.mean(0).var().item<double>();
  const double expect = ab * var_z0 + (1 - ab);
  CHECK(std::abs(total - expect) / expect < 0.05);
}

TEST_CASE("x0_from_eps inverse, tau=1 factor and affinity") {
  NoiseSchedule s;
  torch::manual_seed(2);
  // Double precision: at tau near T the inverse divides by sqrt(alpha_bar) ~ 6e-3.
  auto z0 = torch::randn({100, 4, 16, 16}, torch::kFloat64);
  auto eps = torch::randn({100, 4, 16, 16}, torch::kFloat64);
  auto taus = torch::randint(1, 1001, {100}, torch::kInt64);
  auto zt = add_noise(z0, eps, taus, s);
  CHECK(max_abs(x0_from_eps(zt, taus, eps, s) - z0) <= 1e-5);
  CHECK(max_abs(eps_from_x0(zt, taus, z0, s) - eps) < 1e-8);

  auto z = torch::randn({1, 4, 16, 16});
  auto one = x0_from_eps(z, 1, torch::zeros_like(z), s);
  CHECK(max_abs(one - z * (1.0 / std::sqrt(0.9999))) < 1e-6);
  CHECK(1.0 / std::sqrt(0.9999) == doctest::Approx(1.00005).epsilon(1e-8));

  auto e1 = torch::randn_like(z), e2 = torch::randn_like(z);
  const double a = 0.3, b = -1.7;
  const int tau = 250;
  auto lhs = x0_from_eps(z, tau, a * e1 + b * e2, s);
  auto rhs = a * x0_from_eps(z, tau, e1, s) + b * x0_from_eps(z, tau, e2, s) -
             (a + b - 1) * z / std::sqrt(s.alpha_bar(tau));
  CHECK(max_abs(lhs - rhs) < 1e-4);
}

TEST_CASE("step functions") {
  NoiseSchedule s;
  torch::manual_seed(3);
  auto z = torch::randn({2, 4, 16, 16});
  auto e = torch::randn_like(z);
  CHECK(torch::equal(ddim_step(z, 500, 500, e, s), z));
  CHECK(max_abs(ddim_step(z, 500, 0, e, s) - x0_from_eps(z, 500, e, s)) < 1e-6);
  auto n1 = torch::randn_like(z), n2 = torch::randn_like(z);
  CHECK(torch::equal(ddpm_step(z, 1, e, n1, s), ddpm_step(z, 1, e, n2, s)));
  CHECK_FALSE(torch::equal(ddpm_step(z, 2, e, n1, s), ddpm_step(z, 2, e, n2, s)));
  CHECK(max_abs(ancestral_step(z, 300, 299, e, n1, s) - ddpm_step(z, 300, e, n1, s)) < 1e-6);
}

TEST_CASE("1000-step ancestral chain with the true-noise oracle recovers z0") {
  NoiseSchedule s;
  torch::manual_seed(4);
  auto z0 = torch::randn({2, 4, 16, 16});
  auto z = add_noise(z0, torch::randn_like(z0), 1000, s);
  for (int tau = 1000; tau >= 1; --tau) {
    auto taus = torch::full({2}, tau, torch::kInt64);
    auto oracle = eps_from_x0(z, taus, z0, s);
    z = ddpm_step(z, tau, oracle, torch::randn_like(z), s);
  }
  CHECK(max_abs(z - z0) <= 1e-3);
}

TEST_CASE("strided timesteps") {
  CHECK(strided_timesteps(1000, 1) == std::vector<int>{1000});
  auto t = strided_timesteps(1000, 20);
  CHECK(t.size() == 20);
  CHECK(t.front() == 1000);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] < t[i - 1]);
  CHECK(t.back() >= 1);
  CHECK(strided_timesteps(5, 50).size() == 5);
  CHECK(parse_sampler("ddim") == SamplerKind::Ddim);
  CHECK(to_string(SamplerKind::Ddpm) == "ddpm");
  CHECK_THROWS_AS(parse_sampler("euler"), Error);
}

TEST_CASE("generator: shapes, determinism, null condition, LoRA no-op") {
  Generator g(testing::tiny_generator(), 5);
  auto in = random_inputs(3, 6);
  auto a = g.predict_eps(in.z, in.taus, in.cond, in.pose);
  CHECK(a.sizes() == in.z.sizes());
  CHECK(torch::equal(a, g.predict_eps(in.z, in.taus, in.cond, in.pose)));

  CHECK_THROWS_AS(g.predict_eps(torch::zeros({3, 4, 8, 8}), in.taus, in.cond, in.pose), Error);
  CHECK_THROWS_AS(g.predict_eps(in.z, in.taus.slice(0, 0, 2), in.cond, in.pose), Error);
  CHECK_THROWS_AS(g.predict_eps(in.z, in.taus, torch::zeros({3, 16, 128}), in.pose), Error);
  CHECK_THROWS_AS(g.predict_eps(in.z, in.taus, in.cond, torch::zeros({3, 1, 16, 16})), Error);

  enc::DualEncoder e(enc::Vocabulary::from_grammar(), 1);
  auto t1 = e.encode_text(std::vector<std::string>{"make it red"}).tokens[0];
  auto t2 = e.encode_text(std::vector<std::string>{"have long sleeves"}).tokens[0];
  CHECK_FALSE(torch::equal(t1, t2));
  auto n = enc::null_condition();
  const auto pose = synth::silhouette_template(2);
  auto z = in.z[0];
  CHECK(torch::equal(g.predict_eps(z, 300, n, pose), g.predict_eps(z, 300, enc::null_condition(), pose)));
  auto with_text = g.predict_eps(z, 300, enc::build_condition(t1, torch::zeros({16, 128})), pose);
  CHECK_FALSE(torch::equal(with_text, g.predict_eps(z, 300, n, pose)));

  const auto base_hash = g.base_hash();
  g.insert_lora(7);
  CHECK(g.has_lora());
  CHECK(max_abs(g.predict_eps(in.z, in.taus, in.cond, in.pose) - a) <= 1e-6);
  CHECK(g.base_hash() == base_hash);
  CHECK_THROWS_AS(g.insert_lora(7), Error);
  {
    torch::NoGradGuard ng;
    for (auto& p : g.lora_parameters()) p.fill_(0.05);
  }
  CHECK(max_abs(g.predict_eps(in.z, in.taus, in.cond, in.pose) - a) > 1e-4);
  CHECK(g.base_hash() == base_hash);
}

TEST_CASE("generator freezing and checkpoints") {
  testing::TempDir dir;
  Generator g(testing::tiny_generator(), 8);
  g.insert_lora(1);
  g.freeze_base();
  const auto lora = g.lora_parameters();
  CHECK(g.trainable_parameters().size() == lora.size());
  g.set_stage("finetune");
  g.save(dir.file("g.ckpt"));
  auto h = Generator::load(dir.file("g.ckpt"));
  CHECK(h.has_lora());
  CHECK(h.stage() == "finetune");
  CHECK(h.hash() == g.hash());
  CHECK(h.base_hash() == g.base_hash());
  auto in = random_inputs(2, 9);
  CHECK(torch::equal(h.predict_eps(in.z, in.taus, in.cond, in.pose), g.predict_eps(in.z, in.taus, in.cond, in.pose)));
  auto c = g.clone();
  CHECK(c.hash() == g.hash());
  CHECK(c.stage() == "finetune");
  CHECK_THROWS_AS(Generator::load(dir.file("missing.ckpt")), Error);
}

TEST_CASE("sampler determinism and the one-step strided chain") {
  Generator g(testing::tiny_generator(), 10);
  auto in = random_inputs(2, 11);
  {
    NoiseSource n1({1, 2}), n2({1, 2});
    auto a = sample(in.z, 600, in.cond, in.pose, g, SamplerKind::Ddim, 5, n1);
    auto b = sample(in.z, 600, in.cond, in.pose, g, SamplerKind::Ddim, 5, n2);
    CHECK(torch::equal(a, b));
  }
  {
    NoiseSource n1({3, 4}), n2({3, 4}), n3({5, 4});
    auto a = sample(in.z, 40, in.cond, in.pose, g, SamplerKind::Ddpm, 40, n1);
    auto b = sample(in.z, 40, in.cond, in.pose, g, SamplerKind::Ddpm, 40, n2);
    auto c = sample(in.z, 40, in.cond, in.pose, g, SamplerKind::Ddpm, 40, n3);
    CHECK(torch::equal(a, b));
    CHECK_FALSE(torch::equal(a[0], c[0]));
    CHECK(torch::equal(a[1], c[1]));
  }
  {
    NoiseSource n({1, 2});
    auto one = sample(in.z, 700, in.cond, in.pose, g, SamplerKind::Ddim, 1, n);
    auto taus = torch::full({2}, 700, torch::kInt64);
    auto direct = x0_from_eps(in.z, taus, g.predict_eps(in.z, taus, in.cond, in.pose), g.schedule());
    CHECK(max_abs(one - direct) < 1e-5);
  }
  {
    // Batch composition does not change a row's result.
    NoiseSource pair({21, 22}), solo({22});
    auto both = sample(in.z, 30, in.cond, in.pose, g, SamplerKind::Ddpm, 30, pair);
    auto second = sample(in.z.slice(0, 1), 30, in.cond.slice(0, 1), in.pose.slice(0, 1), g, SamplerKind::Ddpm, 30,
                         solo);
    CHECK(max_abs(both[1] - second[0]) < 1e-5);
  }
}

TEST_CASE("init_from_reference") {
  NoiseSchedule s;
  torch::manual_seed(12);
  auto zx = 3.0 * torch::randn({8, 4, 16, 16});
  NoiseSource n1({1, 2, 3, 4, 5, 6, 7, 8}), n2({1, 2, 3, 4, 5, 6, 7, 8});
  auto [a, ta] = init_from_reference(zx, 1000, n1, s);
  auto [b, tb] = init_from_reference(zx, 1000, n2, s);
  CHECK(ta == 1000);
  CHECK(torch::equal(a, b));
  // Noise share of the output variance exceeds 99% at the last timestep.
  const double signal = s.alpha_bar(1000) * zx.var().item<double>();
  const double noise = 1.0 - s.alpha_bar(1000);
  CHECK(noise / (noise + signal) > 0.9);
  CHECK(1.0 - s.alpha_bar(1000) > 0.99);
  auto resid = a - std::sqrt(s.alpha_bar(1000)) * zx;
  CHECK(resid.var().item<double>() == doctest::Approx(noise).epsilon(0.05));
  auto [c, tc] = init_from_reference(zx, 100, n1, s);
  CHECK(tc == 100);
  CHECK(torch::nn::functional::cosine_similarity(c.flatten(), zx.flatten(),
                                                 torch::nn::functional::CosineSimilarityFuncOptions().dim(0))
            .item<double>() > 0.8);
}
