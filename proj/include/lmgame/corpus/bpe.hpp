#pragma once

#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lmgame/core/error.hpp"
#include "lmgame/core/types.hpp"
#include "lmgame/corpus/unicode.hpp"
#include "lmgame/corpus/vocab.hpp"

namespace lmgame {

// Splits text the way GPT-2's pre-tokenizer regex does:
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// Pieces are byte ranges of the input and partition it exactly.
inline std::vector<std::string_view> pretokenize(std::string_view text) {
  const auto units = unicode::decode(text);
  const std::size_t n = units.size();
  std::vector<std::string_view> pieces;

  auto cp = [&](std::size_t i) { return units[i].codepoint; };
  auto is_other = [&](std::size_t i) {
    const auto c = cp(i);
    return !unicode::is_space(c) && !unicode::is_letter(c) && !unicode::is_number(c);
  };
  auto emit = [&](std::size_t from, std::size_t to) {
    const auto begin = units[from].offset;
    const auto end = to < n ? units[to].offset : text.size();
    pieces.push_back(text.substr(begin, end - begin));
  };

  std::size_t i = 0;
  while (i < n) {
    if (cp(i) == '\'' && i + 1 < n) {
      const auto a = cp(i + 1);
      const auto b = i + 2 < n ? cp(i + 2) : -1;
      std::size_t len = 0;
      if (a == 's' || a == 't' || a == 'm' || a == 'd') len = 2;
      if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) len = 3;
      if (len > 0) {
        emit(i, i + len);
        i += len;
        continue;
      }
    }

    const std::size_t start = i;
    const std::size_t body = (cp(i) == ' ' && i + 1 < n) ? i + 1 : i;
    auto run = [&](auto pred) {
      std::size_t j = body;
      while (j < n && pred(j)) ++j;
      return j;
    };
    if (unicode::is_letter(cp(body))) {
      const auto j = run([&](std::size_t k) { return unicode::is_letter(cp(k)); });
      emit(start, j);
      i = j;
      continue;
    }
    if (unicode::is_number(cp(body))) {
      const auto j = run([&](std::size_t k) { return unicode::is_number(cp(k)); });
      emit(start, j);
      i = j;
      continue;
    }
    if (is_other(body)) {
      const auto j = run(is_other);
      emit(start, j);
      i = j;
      continue;
    }

    // Whitespace run. The last whitespace char stays with the following token unless the
    // run ends the text.
    std::size_t j = i;
    while (j < n && unicode::is_space(cp(j))) ++j;
    if (j < n && j - i >= 2) --j;
    emit(i, j);
    i = j;
  }
  return pieces;
}

namespace detail {

inline void bpe_piece(std::string_view piece, const Vocab& vocab, TokenSeq& out) {
  std::vector<TokenId> symbols;
  symbols.reserve(piece.size());
  for (unsigned char b : piece) symbols.push_back(*vocab.byte_token(b));

  while (symbols.size() > 1) {
    std::uint32_t best_rank = std::numeric_limits<std::uint32_t>::max();
    TokenId best_left = 0, best_right = 0, best_out = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      if (auto m = vocab.merge(symbols[k], symbols[k + 1]); m && m->rank < best_rank) {
        best_rank = m->rank;
        best_left = symbols[k];
        best_right = symbols[k + 1];
        best_out = m->merged;
      }
    }
    if (best_rank == std::numeric_limits<std::uint32_t>::max()) break;

    std::vector<TokenId> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k] == best_left && symbols[k + 1] == best_right) {
        merged.push_back(best_out);
        ++k;
      } else {
        merged.push_back(symbols[k]);
      }
    }
    symbols = std::move(merged);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

}  // namespace detail

// Byte-level BPE: pre-tokenize, then repeatedly apply the lowest-ranked merge present.
inline TokenSeq bpe_encode(std::string_view text, const Vocab& vocab) {
  if (!vocab.covers_all_bytes()) fail(ErrorKind::data, "byte-level BPE needs a token for every byte value");
  TokenSeq out;
  for (auto piece : pretokenize(text)) detail::bpe_piece(piece, vocab, out);
  return out;
}

// Raw concatenated bytes of a token sequence.
inline std::string token_bytes(TokenView tokens, const Vocab& vocab) {
  std::string bytes;
  for (auto id : tokens) bytes += vocab.bytes(id);
  return bytes;
}

// Decodes to UTF-8 text; undecodable byte runs become "<?>".
inline std::string bpe_decode(TokenView tokens, const Vocab& vocab) {
  return unicode::render(token_bytes(tokens, vocab));
}

// Whole-piece tokenizer for desk-scale corpora. Each distinct pre-token becomes one vocab
// entry; the 256 single bytes come first so unseen text still encodes.
inline Vocab build_word_vocab(const std::vector<std::string>& texts) {
  std::vector<std::string> tokens;
  tokens.reserve(256);
  for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
  std::set<std::string> pieces;  // sorted, so ids do not depend on document order
  for (const auto& text : texts)
    for (auto piece : pretokenize(text)) pieces.emplace(piece);
  for (const auto& piece : pieces)
    if (piece.size() > 1) tokens.push_back(piece);
  return Vocab(std::move(tokens));
}

inline TokenSeq word_encode(std::string_view text, const Vocab& vocab) {
  if (!vocab.covers_all_bytes()) fail(ErrorKind::data, "word tokenizer needs a token for every byte value");
  TokenSeq out;
  for (auto piece : pretokenize(text)) {
    if (auto id = vocab.find(piece)) {
      out.push_back(*id);
    } else {
      for (unsigned char b : piece) out.push_back(*vocab.byte_token(b));
    }
  }
  return out;
}

enum class TokenizerKind { byte_level_bpe, whole_word };

inline const char* to_string(TokenizerKind k) { return k == TokenizerKind::byte_level_bpe ? "bpe" : "word"; }

inline TokenizerKind tokenizer_kind_from_string(std::string_view s) {
  if (s == "bpe") return TokenizerKind::byte_level_bpe;
  if (s == "word") return TokenizerKind::whole_word;
  fail(ErrorKind::config, "unknown tokenizer kind '" + std::string(s) + "' (expected bpe or word)");
}

class Tokenizer {
 public:
  Tokenizer(Vocab vocab, TokenizerKind kind) : vocab_(std::move(vocab)), kind_(kind) {}

  TokenSeq encode(std::string_view text) const {
    return kind_ == TokenizerKind::byte_level_bpe ? bpe_encode(text, vocab_) : word_encode(text, vocab_);
  }
  std::string decode(TokenView tokens) const { return bpe_decode(tokens, vocab_); }

  const Vocab& vocab() const { return vocab_; }
  TokenizerKind kind() const { return kind_; }

 private:
  Vocab vocab_;
  TokenizerKind kind_;
};

}  // namespace lmgame
