#include "mred/encoders/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "mred/common/error.hpp"
#include "mred/synthdata/attributes.hpp"

namespace mred::enc {

int TokenSequence::length() const {
  return static_cast<int>(std::count(pad.begin(), pad.end(), false));
}

std::vector<std::string> split_words(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::istringstream is(lower);
  std::vector<std::string> words;
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Vocabulary Vocabulary::from_grammar() {
  std::vector<std::string> words = {std::string(kPadToken), std::string(kUnkToken)};
  for (auto& w : synth::grammar_words()) words.push_back(w);
  nlohmann::json j = nlohmann::json::object();
  for (size_t i = 0; i < words.size(); ++i) j[words[i]] = i;
  return from_json(j);
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.words_.resize(j.size());
  for (const auto& [word, id] : j.items()) {
    const auto i = id.get<std::int64_t>();
    if (i < 0 || i >= static_cast<std::int64_t>(j.size()) || !v.words_[i].empty())
      throw Error("vocabulary ids must be a permutation of 0..N-1");
    v.words_[i] = word;
    v.ids_[word] = i;
  }
  if (v.id(std::string(kPadToken)) != kPadId || v.id(std::string(kUnkToken)) != kUnkId)
    throw Error("vocabulary must map <pad> to 0 and <unk> to 1");
  return v;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (size_t i = 0; i < words_.size(); ++i) j[words_[i]] = i;
  return j;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

std::int64_t Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnkId : it->second;
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence seq;
  seq.ids.fill(kPadId);
  seq.pad.fill(true);
  const auto words = split_words(text);
  for (size_t i = 0; i < words.size() && i < static_cast<size_t>(kTextLength); ++i) {
    seq.ids[i] = id(words[i]);
    seq.pad[i] = false;
  }
  return seq;
}

}  // namespace mred::enc
