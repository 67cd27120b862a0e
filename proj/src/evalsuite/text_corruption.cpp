#include "mred/evalsuite/text_corruption.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "mred/common/error.hpp"
#include "mred/encoders/vocab.hpp"

namespace mred::eval {

std::string rotate_words(const std::string& text, std::mt19937_64& rng) {
  auto words = enc::split_words(text);
  std::shuffle(words.begin(), words.end(), rng);
  return enc::join_words(words);
}

std::string mask_words(const std::string& text, int n, std::mt19937_64& rng) {
  if (n < 0) throw Error("mask_words: n must be >= 0");
  auto words = enc::split_words(text);
  std::vector<std::size_t> pos(words.size());
  std::iota(pos.begin(), pos.end(), 0);
  std::shuffle(pos.begin(), pos.end(), rng);
  for (std::size_t i = 0; i < std::min<std::size_t>(n, pos.size()); ++i) words[pos[i]] = std::string(enc::kUnkToken);
  return enc::join_words(words);
}

}  // namespace mred::eval
