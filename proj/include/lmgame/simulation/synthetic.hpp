#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lmgame/core/error.hpp"
#include "lmgame/core/random.hpp"

namespace lmgame {

// Parameters of a toy language: a second-order Markov chain over invented words, with a
// Zipfian background and punctuation. Context matters, so low- and high-order n-grams
// trained on it differ clearly in quality.
struct SyntheticLanguage {
  std::size_t words = 300;
  std::size_t branching = 6;         // preferred successors per two-word state
  double background = 0.15;          // chance of drawing from the unigram instead
  double zipf_exponent = 1.1;
  double sentence_end = 1.0 / 12.0;  // chance of "." after a word
  double paragraph_end = 0.2;        // chance of a newline after a sentence
  std::uint64_t seed = 7;
};

namespace detail {

inline std::vector<std::string> invent_words(std::size_t count, Rng& rng) {
  static const char* const onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"};
  static const char* const vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < count) {
    const auto syllables = 1 + std::uniform_int_distribution<int>(0, 2)(rng);
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += onsets[std::uniform_int_distribution<std::size_t>(0, std::size(onsets) - 1)(rng)];
      w += vowels[std::uniform_int_distribution<std::size_t>(0, std::size(vowels) - 1)(rng)];
    }
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

}  // namespace detail

// Generates documents of roughly words_per_doc words each.
inline std::vector<std::string> synthetic_documents(const SyntheticLanguage& lang, std::size_t documents, std::size_t words_per_doc,
                                                    std::uint64_t stream) {
  if (lang.words < 2 || lang.branching == 0) fail(ErrorKind::config, "synthetic language needs >= 2 words and branching >= 1");
  auto vocab_rng = make_rng(lang.seed, 0);
  const auto words = detail::invent_words(lang.words, vocab_rng);
  std::vector<double> zipf(lang.words);
  for (std::size_t i = 0; i < lang.words; ++i) zipf[i] = 1.0 / std::pow(static_cast<double>(i + 1), lang.zipf_exponent);
  std::discrete_distribution<std::size_t> unigram(zipf.begin(), zipf.end());

  std::vector<double> successor_weights(lang.branching);
  for (std::size_t k = 0; k < lang.branching; ++k) successor_weights[k] = std::pow(0.5, static_cast<double>(k));
  std::discrete_distribution<std::size_t> successor_rank(successor_weights.begin(), successor_weights.end());

  auto rng = make_rng(lang.seed, stream + 1);
  std::vector<std::string> docs;
  for (std::size_t d = 0; d < documents; ++d) {
    std::string text;
    std::size_t prev2 = 0, prev1 = 0;
    bool line_start = true;
    for (std::size_t w = 0; w < words_per_doc; ++w) {
      std::size_t next;
      if (uniform01(rng) < lang.background) {
        next = unigram(rng);
      } else {
        // The successor list of a state is a fixed function of the state.
        auto state_rng = make_rng(lang.seed, 0x100000 + prev2 * lang.words + prev1);
        std::vector<std::size_t> successors(lang.branching);
        for (auto& s : successors) s = unigram(state_rng);
        next = successors[successor_rank(rng)];
      }
      if (!line_start) text += ' ';
      text += words[next];
      line_start = false;
      prev2 = prev1;
      prev1 = next;
      if (uniform01(rng) < lang.sentence_end) {
        text += '.';
        if (uniform01(rng) < lang.paragraph_end) {
          text += '\n';
          line_start = true;
        }
      }
    }
    docs.push_back(std::move(text));
  }
  return docs;
}

}  // namespace lmgame
