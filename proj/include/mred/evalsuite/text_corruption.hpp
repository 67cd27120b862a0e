#pragma once

#include <random>
#include <string>

namespace mred::eval {

/// Uniform random permutation of the whitespace-separated words.
std::string rotate_words(const std::string& text, std::mt19937_64& rng);

/// Replaces n distinct uniformly chosen words with "<unk>"; n >= word count masks all.
std::string mask_words(const std::string& text, int n, std::mt19937_64& rng);

}  // namespace mred::eval
