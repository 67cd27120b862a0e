#include "mred/synthdata/triplet.hpp"

#include <algorithm>
#include <numeric>

#include "mred/common/error.hpp"

namespace mred::synth {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

TripletSpec make_spec(const AttributeVector& ref, const Instruction& instruction, std::uint64_t seed) {
  return {ref, apply_instruction(ref, instruction), instruction, seed};
}

Triplet materialize(const TripletSpec& spec) {
  Triplet t;
  t.ref_attrs = spec.ref_attrs;
  t.tgt_attrs = spec.tgt_attrs;
  t.instruction = spec.instruction;
  t.seed = spec.seed;
  t.reference = render_garment(spec.ref_attrs).image;
  auto target = render_garment(spec.tgt_attrs);
  t.target = std::move(target.image);
  t.silhouette = std::move(target.silhouette);
  return t;
}

TripletSpec sample_triplet_spec(std::mt19937_64& rng, int num_clauses) {
  if (num_clauses < 1 || num_clauses > 3) throw Error("num_clauses must be in [1, 3]");
  const auto ref = AttributeVector::sample(rng);
  std::array<int, kNumFields> order{};
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<Field, int>> delta;
  for (int i = 0; i < num_clauses; ++i) {
    const auto f = static_cast<Field>(order[i]);
    // Uniform over the values other than the current one.
    std::uniform_int_distribution<int> d(0, kFieldCardinality[order[i]] - 2);
    int v = d(rng);
    if (v >= ref.get(f)) ++v;
    delta.emplace_back(f, v);
  }
  return make_spec(ref, make_instruction(delta));
}

Triplet sample_triplet(std::mt19937_64& rng, int num_clauses) {
  return materialize(sample_triplet_spec(rng, num_clauses));
}

TripletSpec sample_triplet_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  const int n = r < 0.4 ? 1 : (r < 0.8 ? 2 : 3);
  auto t = sample_triplet_spec(rng, n);
  t.seed = seed;
  return t;
}

std::vector<TripletSpec> generate_split(std::uint64_t seed, std::size_t count) {
  std::vector<TripletSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_triplet_spec(derive_seed(seed, i)));
  return out;
}

}  // namespace mred::synth
