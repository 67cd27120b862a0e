#pragma once

// Evaluation protocols. Each takes the model through the EditModel interface
// and scores images in Embedder space; per-item scores are returned alongside
// means so callers can bootstrap.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "mred/evalsuite/editor.hpp"
#include "mred/evalsuite/probe.hpp"
#include "mred/synthdata/triplet.hpp"

namespace mred::eval {

/// References or targets of `specs` as [N,3,64,64].
torch::Tensor reference_images(const std::vector<synth::TripletSpec>& specs);
torch::Tensor target_images(const std::vector<synth::TripletSpec>& specs);

/// The first `n` specs with at least `min_clauses` clauses (exactly 1 when `single_only`).
std::vector<synth::TripletSpec> select_subset(const std::vector<synth::TripletSpec>& specs, std::size_t n,
                                              int min_clauses, bool single_only = false);

/// Sequential rounds over a batch: round r edits the round r-1 output with
/// texts[r], silhouettes[r], seeds[r] (each one entry per row). Returns
/// [refs, round 1, ..., round R].
std::vector<torch::Tensor> multi_round_chain(const EditModel& model, const torch::Tensor& refs,
                                             const std::vector<std::vector<std::string>>& texts,
                                             const std::vector<std::vector<int>>& silhouettes,
                                             const std::vector<std::vector<std::uint64_t>>& seeds);
/// Single-image form; the result starts with the reference.
std::vector<Image> multi_round_chain(const EditModel& model, const Image& reference,
                                     const std::vector<std::string>& instructions, const std::vector<int>& silhouettes,
                                     const std::vector<std::uint64_t>& seeds);

/// Splits every spec (all must have >= 2 clauses) and runs (T1, T2) and (T2, T1)
/// with the same seed per round and the target silhouette in both rounds.
/// Per-item cosine of the two finals.
std::vector<double> swap_consistency(const EditModel& model, const Embedder& embed,
                                     const std::vector<synth::TripletSpec>& specs, std::uint64_t seed);

/// Per-item cosine(generated, target) for the clean instruction, a word rotation,
/// and masks of each count in `mask_counts`. Keys: "clean", "rotate", "mask1", ...
std::map<std::string, std::vector<double>> robustness(const EditModel& model, const Embedder& embed,
                                                      const std::vector<synth::TripletSpec>& specs,
                                                      std::uint64_t seed, const std::vector<int>& mask_counts);

struct FidelityResult {
  std::vector<int> changed;        // per item: probed edited field equals the requested value
  std::vector<double> preserved;   // per item: fraction of the other five fields unchanged
  double changed_ok = 0.0;         // percent
  double preserved_ok = 0.0;       // percent (mean of `preserved`)
};
/// Probe-based check of single-clause edits.
FidelityResult edit_fidelity(const EditModel& model, const AttributeProbe& probe,
                             const std::vector<synth::TripletSpec>& specs, std::uint64_t seed);

/// Chains of `rounds` single-clause edits on distinct fields from a random reference.
struct EditChain {
  synth::AttributeVector reference;
  std::vector<synth::Instruction> edits;
  synth::AttributeVector final_attrs() const;
};
std::vector<EditChain> make_chains(std::uint64_t seed, int count, int rounds);
/// Per-chain: probed final attributes equal the cumulative edit.
std::vector<int> chain_success(const EditModel& model, const AttributeProbe& probe,
                               const std::vector<EditChain>& chains, std::uint64_t seed);

/// IoU of each image's foreground with the silhouette template it was asked for.
std::vector<double> silhouette_iou(const torch::Tensor& images, const std::vector<int>& silhouettes);

struct EvalConfig {
  std::size_t subset = 200;
  std::uint64_t seed = 0;
  std::vector<int> ks = {1, 5, 10, 50};
  std::vector<int> mask_counts = {1, 2, 3};
  int chains = 100;
  int chain_rounds = 5;
  SampleOptions sampling;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

/// JSON schema (all scores from the same seed-determined run):
///   frechet, clip_score, recall{K}, reference_recall{K}, gallery_size,
///   swap_consistency, robustness{case}, attribute_accuracy{changed_ok, preserved_ok},
///   chain_accuracy, silhouette_iou, config, items{swap, robustness{case}, ranks,
///   reference_ranks, changed, preserved, chains, features{generated, target}}.
/// Items are per evaluated triplet or chain, in subset order, so two reports
/// from the same config can be compared pairwise.
struct EvalReport {
  double frechet = 0.0;
  double clip_score = 0.0;
  std::map<int, double> recall;
  std::map<int, double> reference_recall;  // querying with the unedited reference
  int gallery_size = 0;
  double swap_consistency = 0.0;
  std::map<std::string, double> robustness;
  double changed_ok = 0.0;
  double preserved_ok = 0.0;
  double chain_accuracy = 0.0;
  double silhouette_iou = 0.0;
  nlohmann::json config;

  std::vector<double> swap_items;
  std::map<std::string, std::vector<double>> robustness_items;
  std::vector<int64_t> rank_items;            // 0-based rank of the true target per generated query
  std::vector<int64_t> reference_rank_items;  // same for the unedited reference
  std::vector<int> changed_items;
  std::vector<double> preserved_items;
  std::vector<int> chain_items;
  std::vector<std::vector<double>> generated_features;  // embedder rows of the generated subset
  std::vector<std::vector<double>> target_features;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport run_full_eval(const EditModel& model, const Embedder& embed, const AttributeProbe& probe,
                         const std::vector<synth::TripletSpec>& test, const EvalConfig& cfg);

/// {"full": ..., "baseline": ..., "delta": {metric: full - baseline}} without per-item arrays.
nlohmann::json compare_reports(const EvalReport& full, const EvalReport& baseline);

}  // namespace mred::eval
