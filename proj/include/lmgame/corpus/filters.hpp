#pragma once

#include "lmgame/core/types.hpp"
#include "lmgame/corpus/unicode.hpp"
#include "lmgame/corpus/vocab.hpp"

namespace lmgame {

// A token nobody could type: nothing visible once whitespace, control and format
// characters are removed, or any byte that does not decode on its own (half a character).
inline bool is_visually_empty(TokenId id, const Vocab& vocab) {
  for (const auto& u : unicode::decode(vocab.bytes(id))) {
    if (!u.valid()) return true;
  }
  for (const auto& u : unicode::decode(vocab.bytes(id))) {
    if (!unicode::is_invisible(u.codepoint)) return false;
  }
  return true;
}

inline bool starts_with_space(TokenId id, const Vocab& vocab) {
  const auto& b = vocab.bytes(id);
  return !b.empty() && b.front() == ' ';
}

// " dog" followed by " ran": space-initial, otherwise only letters, and the next token
// also starts with a space.
inline bool is_word_token(TokenId id, TokenId next, const Vocab& vocab) {
  if (!starts_with_space(id, vocab) || !starts_with_space(next, vocab)) return false;
  const auto units = unicode::decode(std::string_view(vocab.bytes(id)).substr(1));
  if (units.empty()) return false;
  for (const auto& u : units)
    if (!unicode::is_letter(u.codepoint)) return false;
  return true;
}

}  // namespace lmgame
