#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <ATen/CPUGeneratorImpl.h>

#include <torch/torch.h>

#include <doctest.h>

#include "mred/common/error.hpp"
#include "mred/evalsuite/metrics.hpp"
#include "mred/evalsuite/probe.hpp"
#include "mred/evalsuite/protocols.hpp"
#include "mred/evalsuite/text_corruption.hpp"
#include "mred/synthdata/render.hpp"
#include "mred/synthdata/triplet.hpp"

using namespace mred;
using namespace mred::eval;

namespace {

Embedder pixel_embedder() {
  return [](const torch::Tensor& images) { return images.flatten(1); };
}

/// Fixed Gaussian projection of the pixels to `dim` features.
Embedder projection_embedder(int dim, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto w = torch::randn({3 * 64 * 64, dim}, gen);
  return [w](const torch::Tensor& images) { return images.flatten(1).matmul(w); };
}

torch::Tensor renders(const std::vector<synth::AttributeVector>& attrs) {
  std::vector<torch::Tensor> out;
  for (const auto& a : attrs) out.push_back(to_tensor(synth::render_garment(a).image));
  return torch::stack(out);
}

/// Reads each reference's attributes, applies the instruction text exactly and re-renders.
class OracleEditor final : public EditModel {
 public:
  explicit OracleEditor(const AttributeProbe& probe) : probe_(&probe) {
    for (auto f : synth::kAllFields)
      for (int v = 0; v < synth::kFieldCardinality[static_cast<int>(f)]; ++v)
        phrases_[synth::clause_phrase(f, v)] = {f, v};
  }
  torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>& texts, const std::vector<int>&,
                     const std::vector<std::uint64_t>&) const override {
    auto attrs = probe_->probe(refs);
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      std::size_t pos = 0;
      const std::string& t = texts[i];
      while (pos <= t.size()) {
        auto end = t.find(" and ", pos);
        if (end == std::string::npos) end = t.size();
        const auto it = phrases_.find(t.substr(pos, end - pos));
        if (it != phrases_.end()) attrs[i].set(it->second.first, it->second.second);
        pos = end + 5;
      }
    }
    return renders(attrs);
  }

 private:
  const AttributeProbe* probe_;
  std::map<std::string, std::pair<synth::Field, int>> phrases_;
};

/// Fresh noise on every call, whatever the seed.
class FreshNoiseEditor final : public EditModel {
 public:
  torch::Tensor edit(const torch::Tensor& refs, const std::vector<std::string>&, const std::vector<int>&,
                     const std::vector<std::uint64_t>&) const override {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(1000 + calls_++);
    return torch::rand(refs.sizes(), gen) * 2 - 1;
  }

 private:
  mutable std::atomic<int> calls_{0};
};

std::vector<synth::TripletSpec> test_specs(std::size_t n, std::uint64_t seed = 7) {
  return synth::generate_split(seed, n);
}

}  // namespace

TEST_CASE("Frechet distance") {
  torch::manual_seed(50);
  auto a = torch::randn({300, 8}), b = torch::randn({300, 8}) * 1.5 + 0.3;
  CHECK(std::abs(frechet_distance(a, a)) < 1e-6);
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-6));
  CHECK(frechet_distance(a, b) > 0.0);

  // 1-D closed form (mu1 - mu2)^2 + (s1 - s2)^2 = 0.64 + 1.
  auto x = torch::randn({20000, 1}, torch::kFloat64) * 1.0 + 0.5;
  auto y = torch::randn({20000, 1}, torch::kFloat64) * 2.0 - 0.3;
  CHECK(frechet_distance(x, y) == doctest::Approx(1.64).epsilon(0.05));

  // Independent diagonal covariances: the distance separates per dimension.
  auto mu = torch::tensor({0.0, 1.0, -2.0}), sd = torch::tensor({1.0, 0.5, 2.0});
  auto mu2 = torch::tensor({0.5, 1.0, -1.0}), sd2 = torch::tensor({1.0, 1.5, 1.0});
  auto p = torch::randn({40000, 3}, torch::kFloat64) * sd + mu;
  auto q = torch::randn({40000, 3}, torch::kFloat64) * sd2 + mu2;
  const double expect = ((mu - mu2).pow(2).sum() + (sd - sd2).pow(2).sum()).item<double>();
  CHECK(frechet_distance(p, q) == doctest::Approx(expect).epsilon(0.05));

  CHECK_THROWS_AS(frechet_distance(torch::randn({1, 3}), torch::randn({5, 3})), Error);
  CHECK_THROWS_AS(frechet_distance(torch::randn({5, 3}), torch::randn({5, 4})), Error);
}

TEST_CASE("embedding similarity score") {
  torch::manual_seed(51);
  auto a = torch::randn({400, 128}), b = torch::randn({400, 128});
  CHECK(clip_score(a, a) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(clip_score(a, b)) < 3.0 / std::sqrt(128.0 * 400.0));
  auto perm = torch::randperm(400);
  CHECK(clip_score(a.index_select(0, perm), b.index_select(0, perm)) ==
        doctest::Approx(clip_score(a, b)).epsilon(1e-9));
  auto per = paired_cosine(a, b);
  CHECK(per.size() == 400);
  CHECK(std::accumulate(per.begin(), per.end(), 0.0) / 400.0 == doctest::Approx(clip_score(a, b)));
}

TEST_CASE("recall at K") {
  torch::manual_seed(52);
  auto gallery = torch::randn({200, 32});
  std::vector<int64_t> gt(200);
  std::iota(gt.begin(), gt.end(), 0);
  CHECK(recall_at_k(gallery, gallery, gt, 1) == 100.0);
  CHECK(recall_at_k(torch::randn({200, 32}), gallery, gt, 200) == 100.0);

  // Chance: K/N percent for queries unrelated to the gallery.
  const int nq = 20000;
  auto queries = torch::randn({nq, 32});
  std::mt19937_64 rng(1);
  std::vector<int64_t> rgt(nq);
  for (auto& g : rgt) g = std::uniform_int_distribution<int64_t>(0, 199)(rng);
  auto r = recall_at(queries, gallery, rgt, {1, 5, 10, 50});
  CHECK(std::abs(r[10] - 5.0) <= 2.0);
  CHECK(std::abs(r[50] - 25.0) <= 2.0);
  CHECK(r[1] <= r[5]);
  CHECK(r[5] <= r[10]);
  CHECK(r[10] <= r[50]);

  // Ties resolve to the lower gallery index.
  auto same = torch::ones({3, 4});
  CHECK(recall_at_k(same.slice(0, 0, 1), same, {0}, 1) == 100.0);
  CHECK(recall_at_k(same.slice(0, 0, 1), same, {2}, 2) == 0.0);
}

TEST_CASE("bootstrap of the mean") {
  auto c = bootstrap_mean(std::vector<double>(50, 0.25), 500, 1);
  CHECK(c.mean == 0.25);
  CHECK(c.lower == doctest::Approx(0.25));
  CHECK(c.upper == doctest::Approx(0.25));
  std::vector<double> v;
  for (int i = 0; i < 100; ++i) v.push_back(i % 2 ? 1.0 : 0.0);
  auto a = bootstrap_mean(v, 2000, 3), b = bootstrap_mean(v, 2000, 3);
  CHECK(a.lower == b.lower);
  CHECK(a.mean == doctest::Approx(0.5));
  CHECK(a.lower < 0.5);
  CHECK(a.upper > 0.5);
  // Normal approximation: 1.645 * 0.5 / sqrt(100).
  CHECK(a.upper - a.mean == doctest::Approx(0.082).epsilon(0.2));
}

TEST_CASE("text corruption") {
  std::mt19937_64 rng(4);
  const std::string t = "make it red and have long sleeves";
  CHECK(mask_words(t, 0, rng) == t);
  CHECK(rotate_words("red", rng) == "red");
  auto masked = mask_words(t, 7, rng);
  CHECK(masked == "<unk> <unk> <unk> <unk> <unk> <unk> <unk>");
  CHECK(mask_words(t, 12, rng) == masked);
  auto two = enc::split_words(mask_words(t, 2, rng));
  CHECK(std::count(two.begin(), two.end(), "<unk>") == 2);
  auto rot = enc::split_words(rotate_words(t, rng));
  auto orig = enc::split_words(t);
  std::sort(rot.begin(), rot.end());
  std::sort(orig.begin(), orig.end());
  CHECK(rot == orig);
}

TEST_CASE("attribute probe") {
  AttributeProbe probe(pixel_embedder());
  CHECK(probe.canonical_hits() == 432);
  const auto a = synth::AttributeVector::from_index(123);
  CHECK(probe.probe(synth::render_garment(a).image) == a);
  const Image blank;
  CHECK(probe.probe(blank) == probe.probe(blank));
}

TEST_CASE("swap consistency stubs") {
  auto specs = select_subset(test_specs(200), 30, 2);
  REQUIRE(specs.size() == 30);
  auto echo = swap_consistency(EchoEditor{}, pixel_embedder(), specs, 1);
  for (double v : echo) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

  auto noise = swap_consistency(FreshNoiseEditor{}, projection_embedder(128, 2), specs, 1);
  const double mean = std::accumulate(noise.begin(), noise.end(), 0.0) / noise.size();
  CHECK(std::abs(mean) < 3.0 / std::sqrt(128.0 * 30.0));
}

TEST_CASE("oracle editor passes the behavioral protocols; echo does not") {
  AttributeProbe probe(pixel_embedder());
  OracleEditor oracle(probe);
  EchoEditor echo;
  auto singles = select_subset(test_specs(300), 20, 1, true);
  REQUIRE(singles.size() == 20);
  for (const auto& s : singles) CHECK(s.instruction.clauses.size() == 1);

  auto good = edit_fidelity(oracle, probe, singles, 3);
  CHECK(good.changed_ok == 100.0);
  CHECK(good.preserved_ok == 100.0);
  auto lazy = edit_fidelity(echo, probe, singles, 3);
  CHECK(lazy.changed_ok == 0.0);
  CHECK(lazy.preserved_ok == 100.0);

  auto chains = make_chains(5, 10, 5);
  for (const auto& c : chains) {
    std::set<synth::Field> fields;
    for (const auto& e : c.edits) fields.insert(e.clauses.at(0).attribute);
    CHECK(fields.size() == 5);
  }
  auto ok = chain_success(oracle, probe, chains, 5);
  CHECK(std::accumulate(ok.begin(), ok.end(), 0) == 10);
  ok = chain_success(echo, probe, chains, 5);
  CHECK(std::accumulate(ok.begin(), ok.end(), 0) == 0);
  CHECK_THROWS_AS(make_chains(1, 1, 7), Error);
}

TEST_CASE("multi-round chain edge cases") {
  AttributeProbe probe(pixel_embedder());
  OracleEditor oracle(probe);
  const auto ref = synth::render_garment(synth::AttributeVector::from_index(40)).image;
  auto none = multi_round_chain(oracle, ref, {}, {}, {});
  REQUIRE(none.size() == 1);
  CHECK(none[0] == ref);
  auto one = multi_round_chain(oracle, ref, {"make it blue"}, {0}, {9});
  REQUIRE(one.size() == 2);
  auto direct = oracle.edit(to_tensor(ref).unsqueeze(0), {"make it blue"}, {0}, {9});
  CHECK(one[1] == from_tensor(direct[0]));
  CHECK(probe.probe(one[1]).color() == *synth::parse_value(synth::Field::Color, "blue"));
}

TEST_CASE("silhouette IoU and robustness keys") {
  std::vector<synth::AttributeVector> attrs;
  std::vector<int> sils;
  for (int i = 0; i < 432; i += 37) {
    attrs.push_back(synth::AttributeVector::from_index(i));
    sils.push_back(attrs.back().shape_id());
  }
  for (double v : silhouette_iou(renders(attrs), sils)) CHECK(v == doctest::Approx(1.0));

  auto specs = select_subset(test_specs(100), 10, 1);
  auto r = robustness(EchoEditor{}, pixel_embedder(), specs, 2, {1, 2, 3});
  for (const auto* key : {"clean", "rotate", "mask1", "mask2", "mask3"}) {
    REQUIRE(r.count(key) == 1);
    CHECK(r[key].size() == 10);
    CHECK(r[key] == r["clean"]);
  }
}

TEST_CASE("full evaluation is deterministic and round-trips through JSON") {
  AttributeProbe probe(pixel_embedder());
  OracleEditor oracle(probe);
  auto test = test_specs(120);
  EvalConfig cfg;
  cfg.subset = 24;
  cfg.chains = 4;
  cfg.seed = 11;
  auto embed = projection_embedder(16, 3);
  auto a = run_full_eval(oracle, embed, probe, test, cfg);
  auto b = run_full_eval(oracle, embed, probe, test, cfg);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.frechet >= 0.0);
  CHECK(a.clip_score == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(a.changed_ok == 100.0);
  CHECK(a.chain_accuracy == 100.0);
  CHECK(a.recall.at(1) <= a.recall.at(5));
  CHECK(a.recall.at(5) <= a.recall.at(10));
  CHECK(a.recall.at(10) >= a.reference_recall.at(10));
  CHECK(EvalReport::from_json(a.to_json()).to_json() == a.to_json());
  CHECK(EvalConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());

  auto base = run_full_eval(EchoEditor{}, embed, probe, test, cfg);
  auto cmp = compare_reports(a, base);
  CHECK(cmp.contains("full"));
  CHECK(cmp.contains("baseline"));
  CHECK(cmp["delta"]["changed_ok"].get<double>() == doctest::Approx(a.changed_ok - base.changed_ok));
  CHECK_FALSE(cmp["full"].contains("items"));
}
