#include "mred/diffusion/generator.hpp"

#include "mred/codec/codec.hpp"
#include "mred/common/checkpoint.hpp"
#include "mred/common/error.hpp"
#include "mred/common/tensor_hash.hpp"

namespace mred::diff {

nlohmann::json GeneratorConfig::to_json() const {
  return {{"channels", unet.channels}, {"heads", unet.heads},         {"cond_dim", unet.cond_dim},
          {"time_dim", unet.time_dim}, {"lora_rank", lora_rank},     {"lora_alpha", lora_alpha},
          {"timesteps", timesteps},    {"beta_start", beta_start},   {"beta_end", beta_end}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.unet.channels = j.value("channels", c.unet.channels);
  c.unet.heads = j.value("heads", c.unet.heads);
  c.unet.cond_dim = j.value("cond_dim", c.unet.cond_dim);
  c.unet.time_dim = j.value("time_dim", c.unet.time_dim);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.timesteps = j.value("timesteps", c.timesteps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  return c;
}

Generator::Generator(GeneratorConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), schedule_(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end) {
  torch::manual_seed(seed);
  net_ = UNet(cfg_.unet);
}

torch::Tensor Generator::predict_eps(const torch::Tensor& z, const torch::Tensor& taus, const torch::Tensor& cond,
                                     const torch::Tensor& pose) const {
  using codec::kLatentChannels, codec::kLatentSize;
  if (z.dim() != 4 || z.size(1) != kLatentChannels || z.size(2) != kLatentSize || z.size(3) != kLatentSize)
    throw Error("predict_eps: latent must be [B,4,16,16]");
  const auto B = z.size(0);
  if (taus.dim() != 1 || taus.size(0) != B) throw Error("predict_eps: need one timestep per latent");
  if (cond.dim() != 3 || cond.size(0) != B || cond.size(1) != enc::kConditionRows || cond.size(2) != cfg_.unet.cond_dim)
    throw Error("predict_eps: condition must be [B,32,128]");
  if (pose.dim() != 4 || pose.size(0) != B || pose.size(1) != 1 || pose.size(2) != kImageSize ||
      pose.size(3) != kImageSize)
    throw Error("predict_eps: pose must be [B,1,64,64]");
  auto z0_hat = net_->forward(z, taus, cond, pose);
  return eps_from_x0(z, taus, z0_hat, schedule_);
}

torch::Tensor Generator::predict_eps(const torch::Tensor& z, int tau, const enc::Condition& c,
                                     const synth::SilhouetteMask& pose) const {
  schedule_.check_tau(tau);
  auto taus = torch::full({1}, tau, torch::kInt64);
  return predict_eps(z.unsqueeze(0), taus, c.rows.unsqueeze(0), synth::mask_tensor(pose).unsqueeze(0))[0];
}

void Generator::insert_lora(std::uint64_t seed) {
  if (has_lora_) throw Error("LoRA already inserted");
  torch::manual_seed(seed);
  net_->enable_lora(cfg_.lora_rank, cfg_.lora_alpha);
  has_lora_ = true;
}

void Generator::freeze_base() {
  for (auto& p : net_->base_parameters()) p.set_requires_grad(false);
  base_frozen_ = true;
}

void Generator::freeze_all() {
  freeze_base();
  for (auto& p : net_->lora_parameters()) p.set_requires_grad(false);
  net_->eval();
}

std::vector<torch::Tensor> Generator::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : net_->parameters())
    if (p.requires_grad()) out.push_back(p);
  return out;
}

std::uint64_t Generator::base_hash() const {
  std::map<std::string, torch::Tensor> base;
  for (const auto& [name, t] : module_state(*net_))
    if (name.find("lora_") == std::string::npos) base.emplace(name, t);
  return hash_tensors(base);
}

std::uint64_t Generator::hash() const { return hash_module(*net_); }

Generator Generator::clone() const {
  Generator g(cfg_);
  if (has_lora_) g.insert_lora(0);
  {
    torch::NoGradGuard ng;
    auto src = module_state(*net_);
    for (auto& [name, dst] : module_state(*g.net_)) dst.copy_(src.at(name));
  }
  if (base_frozen_) g.freeze_base();
  g.stage_ = stage_;
  for (auto& p : g.net_->lora_parameters()) p.set_requires_grad(true);
  return g;
}

void Generator::save(const std::string& path, const nlohmann::json& extra) const {
  nlohmann::json header = {{"kind", "generator"},
                           {"version", kGeneratorVersion},
                           {"config", cfg_.to_json()},
                           {"has_lora", has_lora_},
                           {"base_frozen", base_frozen_},
                           {"stage", stage_},
                           {"base_hash", hex64(base_hash())},
                           {"schedule",
                            {{"type", "linear"},
                             {"timesteps", cfg_.timesteps},
                             {"beta_start", cfg_.beta_start},
                             {"beta_end", cfg_.beta_end}}}};
  if (!extra.is_null()) header["extra"] = extra;
  save_checkpoint(path, header, module_state(*net_));
}

Generator Generator::load(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "generator") throw Error(path + " is not a generator checkpoint");
  if (ckpt.header.value("version", 0) != kGeneratorVersion) throw Error("unsupported generator version in " + path);
  Generator g(GeneratorConfig::from_json(ckpt.header.at("config")));
  if (ckpt.header.at("has_lora").get<bool>()) g.insert_lora(0);
  load_module_state(*g.net_, ckpt);
  if (ckpt.header.at("base_frozen").get<bool>()) g.freeze_base();
  g.stage_ = ckpt.header.value("stage", "init");
  return g;
}

}  // namespace mred::diff
