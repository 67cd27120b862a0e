#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mred/synthdata/attributes.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::synth {

/// Image-free description of a triplet. Every image it refers to is a
/// deterministic render, so datasets are stored and trained on in this form.
struct TripletSpec {
  AttributeVector ref_attrs;
  AttributeVector tgt_attrs;
  Instruction instruction;
  std::uint64_t seed = 0;

  int silhouette_id() const { return tgt_attrs.shape_id(); }
  bool operator==(const TripletSpec&) const = default;
};

struct Triplet {
  Image reference;
  Image target;
  Instruction instruction;
  SilhouetteMask silhouette;
  AttributeVector ref_attrs;
  AttributeVector tgt_attrs;
  std::uint64_t seed = 0;

  bool operator==(const Triplet&) const = default;
  TripletSpec spec() const { return {ref_attrs, tgt_attrs, instruction, seed}; }
};

/// Reference attributes uniform over all 432 combinations; `num_clauses` distinct
/// fields (uniform, in random order) are re-sampled to a different value.
TripletSpec sample_triplet_spec(std::mt19937_64& rng, int num_clauses);
Triplet sample_triplet(std::mt19937_64& rng, int num_clauses);

/// Seeded entry point used by the dataset generator: draws the clause count
/// (40% one, 40% two, 20% three) and then the triplet from one generator.
TripletSpec sample_triplet_spec(std::uint64_t seed);

Triplet materialize(const TripletSpec& spec);
TripletSpec make_spec(const AttributeVector& ref, const Instruction& instruction, std::uint64_t seed = 0);

/// Per-triplet seed derived from a dataset seed and an index (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

std::vector<TripletSpec> generate_split(std::uint64_t seed, std::size_t count);

}  // namespace mred::synth
