#include <torch/torch.h>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "mred/common/error.hpp"
#include "mred/synthdata/manifest.hpp"
#include "mred/synthdata/render.hpp"
#include "mred/synthdata/triplet.hpp"

using namespace mred;
using namespace mred::synth;

namespace {

AttributeVector attrs(int cat, int color, int sleeve, int hem, int pattern, int bright) {
  AttributeVector a;
  a.set(Field::Category, cat);
  a.set(Field::Color, color);
  a.set(Field::Sleeve, sleeve);
  a.set(Field::Hem, hem);
  a.set(Field::Pattern, pattern);
  a.set(Field::Brightness, bright);
  return a;
}

}  // namespace

TEST_CASE("attribute space enumerates 432 combinations") {
  std::set<int> seen;
  for (int i = 0; i < kNumCombinations; ++i) {
    auto a = AttributeVector::from_index(i);
    CHECK(a.index() == i);
    seen.insert(i);
  }
  CHECK(seen.size() == 432);
  AttributeVector a;
  CHECK_THROWS(a.set(Field::Color, 6));
  CHECK_THROWS(a.set(Field::Category, -1));
}

TEST_CASE("render is deterministic and the mask depends on shape only") {
  const auto a = attrs(0, 1, 2, 1, 1, 1);
  CHECK(render_garment(a).image == render_garment(a).image);
  auto b = a;
  b.set(Field::Color, 3);
  b.set(Field::Pattern, 2);
  b.set(Field::Brightness, 0);
  CHECK(render_garment(a).silhouette == render_garment(b).silhouette);
  CHECK(render_garment(a).silhouette == silhouette_template(a.shape_id()));
  CHECK(render_garment(a).silhouette.area() > 0);
}

TEST_CASE("plain fill matches the palette over the mask") {
  for (int color = 0; color < 6; ++color)
    for (int bright = 0; bright < 2; ++bright) {
      const auto r = render_garment(attrs(1, color, 1, 0, 0, bright));
      const auto rgb = fill_color(color, bright);
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        int n = 0;
        for (int y = 0; y < kImageSize; ++y)
          for (int x = 0; x < kImageSize; ++x)
            if (r.silhouette.at(y, x)) {
              sum += r.image.at(y, x, c);
              ++n;
            }
        CHECK(std::abs(sum / n - from_byte(rgb[c])) <= 0.02);
      }
    }
  // Bright red is red-dominant and dark is a scaled copy.
  const auto red = fill_color(0, 1), dark = fill_color(0, 0);
  CHECK(red[0] > 3 * red[1]);
  CHECK(std::abs(dark[0] - std::lround(0.4 * red[0])) <= 1);
}

TEST_CASE("background is mid-gray and the foreground mask recovers the silhouette") {
  for (int i = 0; i < kNumCombinations; i += 37) {
    const auto r = render_garment(AttributeVector::from_index(i));
    CHECK(r.image.at(0, 0, 0) == from_byte(kBackgroundLevel));
    CHECK(foreground_mask(r.image).mask == r.silhouette.mask);
  }
}

TEST_CASE("432 distinct captions") {
  std::set<std::string> caps;
  for (int i = 0; i < kNumCombinations; ++i) caps.insert(caption(AttributeVector::from_index(i)));
  CHECK(caps.size() == 432);
  CHECK(caption(attrs(0, 0, 2, 1, 2, 1)) == "a bright red dotted dress with long sleeves and a long hem");
}

TEST_CASE("instruction templates") {
  CHECK(make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}}).text == "make it red");
  CHECK(make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}, {Field::Sleeve, 2}}).text ==
        "make it red and have long sleeves");
  CHECK_THROWS_WITH(make_instruction(std::vector<std::pair<Field, int>>{}), "empty edit");
  CHECK_THROWS(make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}, {Field::Color, 1}}));
}

TEST_CASE("split keeps clause order and covers every clause") {
  std::mt19937_64 rng(3);
  auto two = make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}, {Field::Sleeve, 2}});
  auto [a, b] = split_instruction(two, rng);
  CHECK(a.text == "make it red");
  CHECK(b.text == "have long sleeves");

  auto three =
      make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}, {Field::Sleeve, 2}, {Field::Hem, 0}});
  std::set<std::size_t> cuts;
  for (int s = 0; s < 50; ++s) {
    std::mt19937_64 r(s);
    auto [t1, t2] = split_instruction(three, r);
    cuts.insert(t1.clauses.size());
    auto joined = t1.clauses;
    joined.insert(joined.end(), t2.clauses.begin(), t2.clauses.end());
    CHECK((joined == three.clauses));
  }
  CHECK((cuts == std::set<std::size_t>{1, 2}));

  auto one = make_instruction(std::vector<std::pair<Field, int>>{{Field::Color, 0}});
  CHECK_THROWS_WITH(split_instruction(one, rng), "not splittable");
}

TEST_CASE("triplets are seeded and consistent") {
  std::mt19937_64 r1(11), r2(11);
  CHECK(sample_triplet(r1, 1) == sample_triplet(r2, 1));
  for (int n = 1; n <= 3; ++n)
    for (int s = 0; s < 30; ++s) {
      std::mt19937_64 rng(s);
      const auto t = sample_triplet(rng, n);
      CHECK(t.instruction.clauses.size() == static_cast<std::size_t>(n));
      int diff = 0;
      for (auto f : kAllFields) diff += t.ref_attrs.get(f) != t.tgt_attrs.get(f);
      CHECK(diff == n);
      CHECK(apply_instruction(t.ref_attrs, t.instruction) == t.tgt_attrs);
      CHECK((t.silhouette.mask == foreground_mask(t.target).mask));
    }
}

TEST_CASE("single-clause edits hit each field about 1/6 of the time") {
  std::mt19937_64 rng(2024);
  std::array<int, kNumFields> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_triplet_spec(rng, 1).instruction.clauses[0].attribute)];
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 1.0 / 6.0) <= 0.02);
}

TEST_CASE("clause-count mix of generated splits") {
  const auto specs = generate_split(5, 5000);
  std::array<int, 4> counts{};
  for (const auto& s : specs) ++counts[s.instruction.clauses.size()];
  CHECK(std::abs(counts[1] / 5000.0 - 0.4) < 0.03);
  CHECK(std::abs(counts[2] / 5000.0 - 0.4) < 0.03);
  CHECK(std::abs(counts[3] / 5000.0 - 0.2) < 0.03);
  CHECK((generate_split(5, 10) == generate_split(5, 10)));
}

TEST_CASE("manifest round trip, empty file and bad lines") {
  testing::TempDir dir;
  std::vector<Triplet> triplets;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) triplets.push_back(sample_triplet(rng, 1 + i % 3));
  write_manifest(triplets, dir.file("m.jsonl"));
  CHECK((read_manifest(dir.file("m.jsonl")) == triplets));
  std::vector<TripletSpec> specs;
  for (const auto& t : triplets) specs.push_back(t.spec());
  CHECK((read_manifest_specs(dir.file("m.jsonl")) == specs));

  std::ofstream(dir.file("empty.jsonl")).close();
  CHECK(read_manifest(dir.file("empty.jsonl")).empty());

  std::string content;
  {
    std::ifstream in(dir.file("m.jsonl"));
    std::string line;
    for (int i = 0; i < 3 && std::getline(in, line); ++i) content += line + "\n";
    content += line.substr(0, line.size() / 2) + "\n";
  }
  std::ofstream(dir.file("trunc.jsonl")) << content;
  try {
    read_manifest(dir.file("trunc.jsonl"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
}
