#include "mred/training/dataset.hpp"

#include "mred/encoders/condition.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::train {

FeatureBank::FeatureBank(const codec::Codec& codec, const enc::DualEncoder& encoder) : encoder_(&encoder) {
  std::vector<Image> renders;
  renders.reserve(synth::kNumCombinations);
  for (int i = 0; i < synth::kNumCombinations; ++i)
    renders.push_back(synth::render_garment(synth::AttributeVector::from_index(i)).image);
  const auto images = stack_images(renders);
  std::vector<torch::Tensor> lat, pat, glo;
  for (int64_t start = 0; start < images.size(0); start += 64) {
    auto chunk = images.slice(0, start, std::min<int64_t>(start + 64, images.size(0)));
    lat.push_back(codec.encode(chunk));
    auto e = encoder.encode_image(chunk);
    pat.push_back(e.patches);
    glo.push_back(e.global);
  }
  latents = torch::cat(lat);
  patches = torch::cat(pat);
  globals = torch::cat(glo);
  std::vector<torch::Tensor> m;
  for (int t = 0; t < synth::kNumShapeTemplates; ++t) m.push_back(synth::mask_tensor(synth::silhouette_template(t)));
  masks = torch::stack(m);
}

torch::Tensor FeatureBank::text(const std::string& s) const {
  {
    std::lock_guard lock(mu_);
    auto it = text_cache_.find(s);
    if (it != text_cache_.end()) return it->second;
  }
  auto emb = encoder_->encode_text(std::vector<std::string>{s}).tokens[0];
  std::lock_guard lock(mu_);
  return text_cache_.emplace(s, emb).first->second;
}

torch::Tensor FeatureBank::texts(const std::vector<std::string>& s) const {
  std::vector<torch::Tensor> rows;
  rows.reserve(s.size());
  for (const auto& t : s) rows.push_back(text(t));
  return torch::stack(rows);
}

TrainBatch make_batch(const FeatureBank& bank, const std::vector<synth::TripletSpec>& data,
                      const std::vector<std::size_t>& indices, std::mt19937_64& rng) {
  std::vector<int64_t> ref, tgt, sil, split;
  std::vector<std::string> full, first, second;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& t = data.at(indices[k]);
    ref.push_back(t.ref_attrs.index());
    tgt.push_back(t.tgt_attrs.index());
    sil.push_back(t.silhouette_id());
    full.push_back(t.instruction.text);
    if (t.instruction.clauses.size() >= 2) {
      auto [t1, t2] = synth::split_instruction(t.instruction, rng);
      split.push_back(static_cast<int64_t>(k));
      first.push_back(t1.text);
      second.push_back(t2.text);
    }
  }
  auto idx = [](const std::vector<int64_t>& v) { return torch::tensor(v, torch::kInt64); };
  TrainBatch b;
  const auto ref_i = idx(ref);
  const auto ref_patches = bank.patches.index_select(0, ref_i);
  b.zx = bank.latents.index_select(0, ref_i);
  b.zy = bank.latents.index_select(0, idx(tgt));
  b.pose = bank.masks.index_select(0, idx(sil));
  b.cond = enc::build_condition_batch(bank.texts(full), ref_patches);
  b.split_rows = idx(split);
  if (!split.empty()) {
    const auto p = ref_patches.index_select(0, b.split_rows);
    b.cond1 = enc::build_condition_batch(bank.texts(first), p);
    b.cond2 = enc::build_condition_batch(bank.texts(second), p);
  }
  return b;
}

}  // namespace mred::train
