#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mred::enc {

inline constexpr int kTextLength = 16;
inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Fixed-length token ids. `pad[i]` is true for padding positions.
struct TokenSequence {
  std::array<std::int64_t, kTextLength> ids{};
  std::array<bool, kTextLength> pad{};

  int length() const;
  bool operator==(const TokenSequence&) const = default;
};

class Vocabulary {
 public:
  /// <pad>, <unk>, then every grammar word in sorted order.
  static Vocabulary from_grammar();
  static Vocabulary from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  /// Lowercase, whitespace split, unknown words -> <unk>, truncate/pad to kTextLength.
  TokenSequence tokenize(std::string_view text) const;

  std::int64_t id(const std::string& word) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::int64_t> ids_;
};

/// Lowercased whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

}  // namespace mred::enc
