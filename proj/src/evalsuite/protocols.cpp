#include "mred/evalsuite/protocols.hpp"

#include <numeric>
#include <random>
#include <set>

#include "mred/common/error.hpp"
#include "mred/evalsuite/metrics.hpp"
#include "mred/evalsuite/text_corruption.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::eval {

namespace {

// Distinct seed streams per protocol.
constexpr std::uint64_t kSwapSalt = 1ULL << 40;
constexpr std::uint64_t kRobustSalt = 2ULL << 40;
constexpr std::uint64_t kFidelitySalt = 3ULL << 40;
constexpr std::uint64_t kChainSalt = 4ULL << 40;
constexpr std::uint64_t kTextSalt = 5ULL << 40;

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t salt, std::size_t i) {
  return synth::derive_seed(seed, salt + i);
}

torch::Tensor images_by_index(const std::vector<int>& idx) {
  std::vector<int64_t> v(idx.begin(), idx.end());
  return canonical_images().index_select(0, torch::tensor(v, torch::kInt64));
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<int> silhouettes_of(const std::vector<synth::TripletSpec>& specs) {
  std::vector<int> out;
  for (const auto& s : specs) out.push_back(s.silhouette_id());
  return out;
}

std::map<std::string, std::vector<double>> robustness_impl(const EditModel& model, const Embedder& embed,
                                                           const std::vector<synth::TripletSpec>& specs,
                                                           std::uint64_t seed, const std::vector<int>& mask_counts,
                                                           torch::Tensor* clean_images) {
  const auto refs = reference_images(specs);
  const auto tgt = embed(target_images(specs));
  const auto sils = silhouettes_of(specs);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < specs.size(); ++i) seeds.push_back(item_seed(seed, kRobustSalt, i));

  std::vector<std::pair<std::string, std::vector<std::string>>> cases;
  auto texts_for = [&](const std::string& name, auto&& corrupt) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      std::mt19937_64 rng(item_seed(seed, kTextSalt + (cases.size() << 20), i));
      t.push_back(corrupt(specs[i].instruction.text, rng));
    }
    cases.emplace_back(name, std::move(t));
  };
  texts_for("clean", [](const std::string& s, std::mt19937_64&) { return s; });
  texts_for("rotate", [](const std::string& s, std::mt19937_64& r) { return rotate_words(s, r); });
  for (int n : mask_counts)
    texts_for("mask" + std::to_string(n), [n](const std::string& s, std::mt19937_64& r) { return mask_words(s, n, r); });

  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, texts] : cases) {
    auto gen = model.edit(refs, texts, sils, seeds);
    if (name == "clean" && clean_images) *clean_images = gen;
    out[name] = paired_cosine(embed(gen), tgt);
  }
  return out;
}

}  // namespace

torch::Tensor reference_images(const std::vector<synth::TripletSpec>& specs) {
  std::vector<int> idx;
  for (const auto& s : specs) idx.push_back(s.ref_attrs.index());
  return images_by_index(idx);
}

torch::Tensor target_images(const std::vector<synth::TripletSpec>& specs) {
  std::vector<int> idx;
  for (const auto& s : specs) idx.push_back(s.tgt_attrs.index());
  return images_by_index(idx);
}

std::vector<synth::TripletSpec> select_subset(const std::vector<synth::TripletSpec>& specs, std::size_t n,
                                              int min_clauses, bool single_only) {
  std::vector<synth::TripletSpec> out;
  for (const auto& s : specs) {
    if (out.size() >= n) break;
    const int c = static_cast<int>(s.instruction.clauses.size());
    if (single_only ? c == 1 : c >= min_clauses) out.push_back(s);
  }
  return out;
}

std::vector<torch::Tensor> multi_round_chain(const EditModel& model, const torch::Tensor& refs,
                                             const std::vector<std::vector<std::string>>& texts,
                                             const std::vector<std::vector<int>>& silhouettes,
                                             const std::vector<std::vector<std::uint64_t>>& seeds) {
  if (silhouettes.size() != texts.size() || seeds.size() != texts.size())
    throw Error("multi_round_chain: texts, silhouettes and seeds need one entry per round");
  std::vector<torch::Tensor> out{refs};
  for (std::size_t r = 0; r < texts.size(); ++r) out.push_back(model.edit(out.back(), texts[r], silhouettes[r], seeds[r]));
  return out;
}

std::vector<Image> multi_round_chain(const EditModel& model, const Image& reference,
                                     const std::vector<std::string>& instructions, const std::vector<int>& silhouettes,
                                     const std::vector<std::uint64_t>& seeds) {
  if (silhouettes.size() != instructions.size() || seeds.size() != instructions.size())
    throw Error("multi_round_chain: one silhouette and seed per instruction");
  std::vector<std::vector<std::string>> t;
  std::vector<std::vector<int>> s;
  std::vector<std::vector<std::uint64_t>> e;
  for (std::size_t r = 0; r < instructions.size(); ++r) {
    t.push_back({instructions[r]});
    s.push_back({silhouettes[r]});
    e.push_back({seeds[r]});
  }
  std::vector<Image> out;
  for (const auto& b : multi_round_chain(model, to_tensor(reference).unsqueeze(0), t, s, e))
    out.push_back(from_tensor(b[0]));
  return out;
}

std::vector<double> swap_consistency(const EditModel& model, const Embedder& embed,
                                     const std::vector<synth::TripletSpec>& specs, std::uint64_t seed) {
  if (specs.empty()) throw Error("swap_consistency: no triplets");
  std::vector<std::string> t1, t2;
  std::vector<std::uint64_t> s1, s2;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::mt19937_64 rng(item_seed(seed, kSwapSalt, i));
    auto [a, b] = synth::split_instruction(specs[i].instruction, rng);
    t1.push_back(a.text);
    t2.push_back(b.text);
    s1.push_back(item_seed(seed, kSwapSalt, 2 * i + 1'000'000));
    s2.push_back(item_seed(seed, kSwapSalt, 2 * i + 1'000'001));
  }
  const auto refs = reference_images(specs);
  const auto sils = silhouettes_of(specs);
  const auto ab = multi_round_chain(model, refs, {t1, t2}, {sils, sils}, {s1, s2}).back();
  const auto ba = multi_round_chain(model, refs, {t2, t1}, {sils, sils}, {s1, s2}).back();
  return paired_cosine(embed(ab), embed(ba));
}

std::map<std::string, std::vector<double>> robustness(const EditModel& model, const Embedder& embed,
                                                      const std::vector<synth::TripletSpec>& specs,
                                                      std::uint64_t seed, const std::vector<int>& mask_counts) {
  return robustness_impl(model, embed, specs, seed, mask_counts, nullptr);
}

FidelityResult edit_fidelity(const EditModel& model, const AttributeProbe& probe,
                             const std::vector<synth::TripletSpec>& specs, std::uint64_t seed) {
  if (specs.empty()) throw Error("edit_fidelity: no triplets");
  std::vector<std::string> texts;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].instruction.clauses.size() != 1) throw Error("edit_fidelity: single-clause triplets only");
    texts.push_back(specs[i].instruction.text);
    seeds.push_back(item_seed(seed, kFidelitySalt, i));
  }
  const auto got = probe.probe(model.edit(reference_images(specs), texts, silhouettes_of(specs), seeds));
  FidelityResult r;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto edited = specs[i].instruction.clauses[0].attribute;
    r.changed.push_back(got[i].get(edited) == specs[i].tgt_attrs.get(edited));
    int kept = 0;
    for (auto f : synth::kAllFields)
      if (f != edited) kept += got[i].get(f) == specs[i].tgt_attrs.get(f);
    r.preserved.push_back(kept / static_cast<double>(synth::kNumFields - 1));
  }
  r.changed_ok = 100.0 * std::accumulate(r.changed.begin(), r.changed.end(), 0) / static_cast<double>(specs.size());
  r.preserved_ok = 100.0 * mean(r.preserved);
  return r;
}

synth::AttributeVector EditChain::final_attrs() const {
  auto a = reference;
  for (const auto& e : edits) a = synth::apply_instruction(a, e);
  return a;
}

std::vector<EditChain> make_chains(std::uint64_t seed, int count, int rounds) {
  if (rounds > synth::kNumFields) throw Error("make_chains: at most one round per attribute field");
  std::vector<EditChain> out;
  for (int c = 0; c < count; ++c) {
    std::mt19937_64 rng(item_seed(seed, kChainSalt, c));
    EditChain chain;
    chain.reference = synth::AttributeVector::sample(rng);
    auto fields = synth::kAllFields;
    std::shuffle(fields.begin(), fields.end(), rng);
    for (int r = 0; r < rounds; ++r) {
      const auto f = fields[r];
      const int card = synth::kFieldCardinality[static_cast<int>(f)];
      const int cur = chain.reference.get(f);
      const int v = (cur + 1 + std::uniform_int_distribution<int>(0, card - 2)(rng)) % card;
      chain.edits.push_back(synth::make_instruction(std::vector<std::pair<synth::Field, int>>{{f, v}}));
    }
    out.push_back(std::move(chain));
  }
  return out;
}

std::vector<int> chain_success(const EditModel& model, const AttributeProbe& probe,
                               const std::vector<EditChain>& chains, std::uint64_t seed) {
  if (chains.empty()) return {};
  const std::size_t rounds = chains[0].edits.size();
  std::vector<int> ref_idx;
  for (const auto& c : chains) {
    if (c.edits.size() != rounds) throw Error("chain_success: chains must have equal length");
    ref_idx.push_back(c.reference.index());
  }
  std::vector<std::vector<std::string>> texts(rounds);
  std::vector<std::vector<int>> sils(rounds);
  std::vector<std::vector<std::uint64_t>> seeds(rounds);
  for (std::size_t i = 0; i < chains.size(); ++i) {
    auto attrs = chains[i].reference;
    for (std::size_t r = 0; r < rounds; ++r) {
      attrs = synth::apply_instruction(attrs, chains[i].edits[r]);
      texts[r].push_back(chains[i].edits[r].text);
      sils[r].push_back(attrs.shape_id());
      seeds[r].push_back(item_seed(seed, kChainSalt, (i + 1) * 1'000'000 + r));
    }
  }
  const auto finals = multi_round_chain(model, images_by_index(ref_idx), texts, sils, seeds).back();
  const auto got = probe.probe(finals);
  std::vector<int> ok;
  for (std::size_t i = 0; i < chains.size(); ++i) ok.push_back(got[i] == chains[i].final_attrs());
  return ok;
}

std::vector<double> silhouette_iou(const torch::Tensor& images, const std::vector<int>& silhouettes) {
  if (images.size(0) != static_cast<int64_t>(silhouettes.size())) throw Error("silhouette_iou: one id per image");
  std::vector<double> out;
  for (int64_t i = 0; i < images.size(0); ++i) {
    const auto fg = synth::foreground_mask(from_tensor(images[i]), 0.15f);
    const auto tpl = synth::silhouette_template(silhouettes[i]);
    int inter = 0, uni = 0;
    for (std::size_t p = 0; p < fg.mask.size(); ++p) {
      inter += fg.mask[p] && tpl.mask[p];
      uni += fg.mask[p] || tpl.mask[p];
    }
    out.push_back(uni ? static_cast<double>(inter) / uni : 1.0);
  }
  return out;
}

nlohmann::json EvalConfig::to_json() const {
  return {{"subset", subset},   {"seed", seed},     {"ks", ks},
          {"mask_counts", mask_counts}, {"chains", chains}, {"chain_rounds", chain_rounds},
          {"sampling", sampling.to_json()}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.subset = j.value("subset", c.subset);
  c.seed = j.value("seed", c.seed);
  c.ks = j.value("ks", c.ks);
  c.mask_counts = j.value("mask_counts", c.mask_counts);
  c.chains = j.value("chains", c.chains);
  c.chain_rounds = j.value("chain_rounds", c.chain_rounds);
  if (j.contains("sampling")) c.sampling = SampleOptions::from_json(j.at("sampling"));
  return c;
}

namespace {

template <typename K>
nlohmann::json keyed(const std::map<K, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) {
    if constexpr (std::is_same_v<K, int>)
      j[std::to_string(k)] = v;
    else
      j[k] = v;
  }
  return j;
}

std::vector<std::vector<double>> rows_of(const torch::Tensor& m) {
  const auto d = m.to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> out(d.size(0));
  for (int64_t i = 0; i < d.size(0); ++i) {
    const double* row = d[i].data_ptr<double>();
    out[i].assign(row, row + d.size(1));
  }
  return out;
}

std::map<int, double> int_keyed(const nlohmann::json& j) {
  std::map<int, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
  return m;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json items = {{"swap", swap_items},
                          {"robustness", robustness_items},
                          {"ranks", rank_items},
                          {"reference_ranks", reference_rank_items},
                          {"changed", changed_items},
                          {"preserved", preserved_items},
                          {"chains", chain_items},
                          {"features", {{"generated", generated_features}, {"target", target_features}}}};
  return {{"frechet", frechet},
          {"clip_score", clip_score},
          {"recall", keyed(recall)},
          {"reference_recall", keyed(reference_recall)},
          {"gallery_size", gallery_size},
          {"swap_consistency", swap_consistency},
          {"robustness", keyed(robustness)},
          {"attribute_accuracy", {{"changed_ok", changed_ok}, {"preserved_ok", preserved_ok}}},
          {"chain_accuracy", chain_accuracy},
          {"silhouette_iou", silhouette_iou},
          {"config", config},
          {"items", items}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.frechet = j.at("frechet").get<double>();
  r.clip_score = j.at("clip_score").get<double>();
  r.recall = int_keyed(j.at("recall"));
  r.reference_recall = int_keyed(j.at("reference_recall"));
  r.gallery_size = j.at("gallery_size").get<int>();
  r.swap_consistency = j.at("swap_consistency").get<double>();
  r.robustness = j.at("robustness").get<std::map<std::string, double>>();
  r.changed_ok = j.at("attribute_accuracy").at("changed_ok").get<double>();
  r.preserved_ok = j.at("attribute_accuracy").at("preserved_ok").get<double>();
  r.chain_accuracy = j.at("chain_accuracy").get<double>();
  r.silhouette_iou = j.value("silhouette_iou", 0.0);
  r.config = j.value("config", nlohmann::json::object());
  if (j.contains("items")) {
    r.swap_items = j.at("items").value("swap", std::vector<double>{});
    const auto& it = j.at("items");
    r.robustness_items = it.value("robustness", std::map<std::string, std::vector<double>>{});
    r.rank_items = it.value("ranks", std::vector<int64_t>{});
    r.reference_rank_items = it.value("reference_ranks", std::vector<int64_t>{});
    r.changed_items = it.value("changed", std::vector<int>{});
    r.preserved_items = it.value("preserved", std::vector<double>{});
    r.chain_items = it.value("chains", std::vector<int>{});
    if (it.contains("features")) {
      r.generated_features = it.at("features").value("generated", std::vector<std::vector<double>>{});
      r.target_features = it.at("features").value("target", std::vector<std::vector<double>>{});
    }
  }
  return r;
}

EvalReport run_full_eval(const EditModel& model, const Embedder& embed, const AttributeProbe& probe,
                         const std::vector<synth::TripletSpec>& test, const EvalConfig& cfg) {
  const auto all = select_subset(test, cfg.subset, 1);
  const auto multi = select_subset(test, cfg.subset, 2);
  const auto single = select_subset(test, cfg.subset, 1, true);
  if (all.size() < 2 || multi.empty() || single.empty()) throw Error("run_full_eval: test set too small");

  EvalReport r;
  r.config = cfg.to_json();
  torch::Tensor generated;
  r.robustness_items = robustness_impl(model, embed, all, cfg.seed, cfg.mask_counts, &generated);
  for (const auto& [k, v] : r.robustness_items) r.robustness[k] = mean(v);

  const auto gen_feat = embed(generated);
  const auto tgt_feat = embed(target_images(all));
  r.frechet = frechet_distance(gen_feat, tgt_feat);
  r.clip_score = clip_score(gen_feat, tgt_feat);

  // Gallery: the distinct targets of the subset.
  std::vector<int> gallery_idx;
  std::map<int, int64_t> pos;
  std::vector<int64_t> gt;
  for (const auto& s : all) {
    const int t = s.tgt_attrs.index();
    if (!pos.count(t)) {
      pos[t] = static_cast<int64_t>(gallery_idx.size());
      gallery_idx.push_back(t);
    }
    gt.push_back(pos[t]);
  }
  const auto gallery = embed(images_by_index(gallery_idx));
  r.gallery_size = static_cast<int>(gallery_idx.size());
  const auto ref_feat = embed(reference_images(all));
  r.recall = recall_at(gen_feat, gallery, gt, cfg.ks);
  r.reference_recall = recall_at(ref_feat, gallery, gt, cfg.ks);
  r.rank_items = retrieval_ranks(gen_feat, gallery, gt);
  r.reference_rank_items = retrieval_ranks(ref_feat, gallery, gt);
  r.generated_features = rows_of(gen_feat);
  r.target_features = rows_of(tgt_feat);
  r.silhouette_iou = mean(silhouette_iou(generated, silhouettes_of(all)));

  r.swap_items = swap_consistency(model, embed, multi, cfg.seed);
  r.swap_consistency = mean(r.swap_items);

  const auto fid = edit_fidelity(model, probe, single, cfg.seed);
  r.changed_ok = fid.changed_ok;
  r.preserved_ok = fid.preserved_ok;
  r.changed_items = fid.changed;
  r.preserved_items = fid.preserved;

  if (cfg.chains > 0) {
    r.chain_items = chain_success(model, probe, make_chains(cfg.seed, cfg.chains, cfg.chain_rounds), cfg.seed);
    r.chain_accuracy = 100.0 * std::accumulate(r.chain_items.begin(), r.chain_items.end(), 0) /
                       static_cast<double>(r.chain_items.size());
  }
  return r;
}

nlohmann::json compare_reports(const EvalReport& full, const EvalReport& baseline) {
  auto strip = [](const EvalReport& r) {
    auto j = r.to_json();
    j.erase("items");
    return j;
  };
  nlohmann::json delta = {{"frechet", full.frechet - baseline.frechet},
                          {"clip_score", full.clip_score - baseline.clip_score},
                          {"swap_consistency", full.swap_consistency - baseline.swap_consistency},
                          {"changed_ok", full.changed_ok - baseline.changed_ok},
                          {"preserved_ok", full.preserved_ok - baseline.preserved_ok},
                          {"chain_accuracy", full.chain_accuracy - baseline.chain_accuracy}};
  for (const auto& [k, v] : full.robustness)
    if (baseline.robustness.count(k)) delta["robustness_" + k] = v - baseline.robustness.at(k);
  for (const auto& [k, v] : full.recall)
    if (baseline.recall.count(k)) delta["recall_" + std::to_string(k)] = v - baseline.recall.at(k);
  return {{"full", strip(full)}, {"baseline", strip(baseline)}, {"delta", delta}};
}

}  // namespace mred::eval
