#include "mred/synthdata/attributes.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "mred/common/error.hpp"

namespace mred::synth {
namespace {

constexpr std::array<std::string_view, kNumFields> kFieldNames = {"category", "color",   "sleeve",
                                                                  "hem",      "pattern", "brightness"};

const std::array<std::vector<std::string_view>, kNumFields> kValueNames = {{
    {"dress", "shirt"},
    {"red", "blue", "green", "yellow", "black", "white"},
    {"sleeveless", "short", "long"},
    {"short", "long"},
    {"plain", "striped", "dotted"},
    {"dark", "bright"},
}};

int idx(Field f) { return static_cast<int>(f); }

}  // namespace

std::string_view field_name(Field f) { return kFieldNames[idx(f)]; }

std::optional<Field> parse_field(std::string_view name) {
  for (int i = 0; i < kNumFields; ++i)
    if (kFieldNames[i] == name) return static_cast<Field>(i);
  return std::nullopt;
}

std::string_view value_name(Field f, int value) {
  if (value < 0 || value >= kFieldCardinality[idx(f)]) throw Error("attribute value out of range");
  return kValueNames[idx(f)][value];
}

std::optional<int> parse_value(Field f, std::string_view name) {
  const auto& names = kValueNames[idx(f)];
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

AttributeVector::AttributeVector(int category, int color, int sleeve, int hem, int pattern, int brightness) {
  set(Field::Category, category);
  set(Field::Color, color);
  set(Field::Sleeve, sleeve);
  set(Field::Hem, hem);
  set(Field::Pattern, pattern);
  set(Field::Brightness, brightness);
}

void AttributeVector::set(Field f, int value) {
  if (value < 0 || value >= kFieldCardinality[idx(f)])
    throw Error("illegal value " + std::to_string(value) + " for " + std::string(field_name(f)));
  values_[idx(f)] = value;
}

int AttributeVector::index() const {
  int i = 0;
  for (int f = 0; f < kNumFields; ++f) i = i * kFieldCardinality[f] + values_[f];
  return i;
}

AttributeVector AttributeVector::from_index(int index) {
  if (index < 0 || index >= kNumCombinations) throw Error("attribute index out of range");
  AttributeVector a;
  for (int f = kNumFields - 1; f >= 0; --f) {
    a.values_[f] = index % kFieldCardinality[f];
    index /= kFieldCardinality[f];
  }
  return a;
}

AttributeVector AttributeVector::sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, kNumCombinations - 1);
  return from_index(d(rng));
}

int AttributeVector::shape_id() const { return (category() * 3 + sleeve()) * 2 + hem(); }

std::string clause_phrase(Field f, int value) {
  const std::string v(value_name(f, value));
  switch (f) {
    case Field::Category:
      return "make it a " + v;
    case Field::Color:
    case Field::Pattern:
    case Field::Brightness:
      return "make it " + v;
    case Field::Sleeve:
      return value == 0 ? "have no sleeves" : "have " + v + " sleeves";
    case Field::Hem:
      return "have a " + v + " hem";
  }
  throw Error("unknown field");
}

Instruction make_instruction(const std::vector<Clause>& clauses) {
  if (clauses.empty()) throw Error("empty edit");
  std::set<Field> seen;
  Instruction out;
  for (const auto& c : clauses) {
    if (!seen.insert(c.attribute).second) throw Error("duplicate attribute in edit");
    if (!out.text.empty()) out.text += " and ";
    out.text += c.phrase;
    out.clauses.push_back(c);
  }
  return out;
}

Instruction make_instruction(const std::vector<std::pair<Field, int>>& delta) {
  std::vector<Clause> clauses;
  clauses.reserve(delta.size());
  for (const auto& [f, v] : delta) clauses.push_back({f, v, clause_phrase(f, v)});
  return make_instruction(clauses);
}

std::pair<Instruction, Instruction> split_instruction(const Instruction& instr, std::mt19937_64& rng) {
  const auto n = static_cast<int>(instr.clauses.size());
  if (n < 2) throw Error("not splittable");
  std::uniform_int_distribution<int> cut_dist(1, n - 1);
  const int cut = cut_dist(rng);
  std::vector<Clause> first(instr.clauses.begin(), instr.clauses.begin() + cut);
  std::vector<Clause> second(instr.clauses.begin() + cut, instr.clauses.end());
  return {make_instruction(first), make_instruction(second)};
}

AttributeVector apply_instruction(AttributeVector attrs, const Instruction& instr) {
  for (const auto& c : instr.clauses) attrs.set(c.attribute, c.value);
  return attrs;
}

std::string caption(const AttributeVector& a) {
  std::ostringstream os;
  os << "a " << value_name(Field::Brightness, a.brightness()) << ' ' << value_name(Field::Color, a.color()) << ' '
     << value_name(Field::Pattern, a.pattern()) << ' ' << value_name(Field::Category, a.category()) << " with ";
  if (a.sleeve() == 0)
    os << "no sleeves";
  else
    os << value_name(Field::Sleeve, a.sleeve()) << " sleeves";
  os << " and a " << value_name(Field::Hem, a.hem()) << " hem";
  return os.str();
}

std::vector<std::string> grammar_words() {
  std::set<std::string> words;
  auto add_text = [&](const std::string& text) {
    std::istringstream is(text);
    std::string w;
    while (is >> w) words.insert(w);
  };
  for (auto f : kAllFields)
    for (int v = 0; v < kFieldCardinality[idx(f)]; ++v) add_text(clause_phrase(f, v));
  for (int i = 0; i < kNumCombinations; ++i) add_text(caption(AttributeVector::from_index(i)));
  add_text("and");
  return {words.begin(), words.end()};
}

}  // namespace mred::synth
