#pragma once

// Garment attribute space and the fixed template grammar.
//
// Attribute fields and values (index order is stable and used on disk):
//   category   : dress, shirt
//   color      : red, blue, green, yellow, black, white
//   sleeve     : sleeveless, short, long
//   hem        : short, long
//   pattern    : plain, striped, dotted
//   brightness : dark, bright
// 2*6*3*2*3*2 = 432 combinations.
//
// Clause templates (one phrase per (field, value)):
//   category   -> "make it a dress" | "make it a shirt"
//   color      -> "make it <color>"
//   sleeve     -> "have no sleeves" | "have short sleeves" | "have long sleeves"
//   hem        -> "have a short hem" | "have a long hem"
//   pattern    -> "make it plain" | "make it striped" | "make it dotted"
//   brightness -> "make it dark" | "make it bright"
// An instruction joins its clause phrases with " and ".
//
// Caption template:
//   "a <brightness> <color> <pattern> <category> with <long sleeves|short sleeves|no sleeves> and a <hem> hem"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mred::synth {

enum class Field : int { Category = 0, Color, Sleeve, Hem, Pattern, Brightness };

inline constexpr int kNumFields = 6;
inline constexpr std::array<int, kNumFields> kFieldCardinality = {2, 6, 3, 2, 3, 2};
inline constexpr int kNumCombinations = 432;

std::string_view field_name(Field f);
std::optional<Field> parse_field(std::string_view name);
std::string_view value_name(Field f, int value);
std::optional<int> parse_value(Field f, std::string_view name);

inline constexpr std::array<Field, kNumFields> kAllFields = {Field::Category, Field::Color,   Field::Sleeve,
                                                              Field::Hem,      Field::Pattern, Field::Brightness};

/// One value per field. Stored as indices into the per-field value tables.
class AttributeVector {
 public:
  AttributeVector() = default;
  AttributeVector(int category, int color, int sleeve, int hem, int pattern, int brightness);

  int get(Field f) const { return values_[static_cast<int>(f)]; }
  void set(Field f, int value);

  int category() const { return get(Field::Category); }
  int color() const { return get(Field::Color); }
  int sleeve() const { return get(Field::Sleeve); }
  int hem() const { return get(Field::Hem); }
  int pattern() const { return get(Field::Pattern); }
  int brightness() const { return get(Field::Brightness); }

  /// Mixed-radix index in [0, 432).
  int index() const;
  static AttributeVector from_index(int index);
  static AttributeVector sample(std::mt19937_64& rng);

  /// Shape template id in [0, 12): depends on category, sleeve and hem only.
  int shape_id() const;

  bool operator==(const AttributeVector&) const = default;

 private:
  std::array<int, kNumFields> values_{};
};

inline constexpr int kNumShapeTemplates = 12;

struct Clause {
  Field attribute;
  int value;
  std::string phrase;
  bool operator==(const Clause&) const = default;
};

struct Instruction {
  std::vector<Clause> clauses;
  std::string text;
  bool operator==(const Instruction&) const = default;
};

std::string clause_phrase(Field f, int value);

/// Throws mred::Error("empty edit") on an empty delta and on repeated fields.
Instruction make_instruction(const std::vector<std::pair<Field, int>>& delta);
Instruction make_instruction(const std::vector<Clause>& clauses);

/// Splits at a uniformly chosen cut in [1, n-1]; throws "not splittable" for a single clause.
std::pair<Instruction, Instruction> split_instruction(const Instruction& instr, std::mt19937_64& rng);

AttributeVector apply_instruction(AttributeVector attrs, const Instruction& instr);

std::string caption(const AttributeVector& attrs);

/// Every word the grammar can emit (clauses and captions), sorted and unique.
std::vector<std::string> grammar_words();

}  // namespace mred::synth
