#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/io.hpp"
#include "lmgame/core/types.hpp"
#include "lmgame/corpus/unicode.hpp"

namespace lmgame {

namespace detail {

// GPT-2 maps every byte to a printable code point so vocab files stay valid UTF-8 text.
inline const std::array<std::int32_t, 256>& byte_to_codepoint() {
  static const std::array<std::int32_t, 256> table = [] {
    std::array<std::int32_t, 256> t{};
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    int next = 256;
    for (int b = 0; b < 256; ++b) t[b] = printable[b] ? b : next++;
    return t;
  }();
  return table;
}

inline void append_utf8(std::string& out, std::int32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

// Raw bytes -> GPT-2 printable form.
inline std::string bytes_to_printable(std::string_view bytes) {
  const auto& table = detail::byte_to_codepoint();
  std::string out;
  for (unsigned char b : bytes) detail::append_utf8(out, table[b]);
  return out;
}

// GPT-2 printable form -> raw bytes. Throws on code points outside the byte alphabet.
inline std::string printable_to_bytes(std::string_view printable) {
  static const auto inverse = [] {
    std::unordered_map<std::int32_t, unsigned char> inv;
    const auto& table = detail::byte_to_codepoint();
    for (int b = 0; b < 256; ++b) inv[table[b]] = static_cast<unsigned char>(b);
    return inv;
  }();
  std::string out;
  for (const auto& u : unicode::decode(printable)) {
    auto it = u.valid() ? inverse.find(u.codepoint) : inverse.end();
    if (it == inverse.end())
      fail(ErrorKind::data, "vocab entry '" + std::string(printable) + "' is not byte-level encoded");
    out.push_back(static_cast<char>(it->second));
  }
  return out;
}

struct MergeRule {
  std::string left;
  std::string right;
};

// Token universe: dense ids 0..V-1 mapped to unique byte strings, plus ranked merge rules
// (rank = position in the list).
class Vocab {
 public:
  Vocab() = default;

  Vocab(std::vector<std::string> tokens, std::vector<MergeRule> merges = {})
      : tokens_(std::move(tokens)), merges_(std::move(merges)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        fail(ErrorKind::data, "duplicate vocab entry '" + bytes_to_printable(tokens_[i]) + "'");
    }
    merge_table_.reserve(merges_.size());
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
      const auto& m = merges_[rank];
      auto l = find(m.left);
      auto r = find(m.right);
      auto out = find(m.left + m.right);
      if (!l || !r || !out)
        fail(ErrorKind::data, "merge rule " + std::to_string(rank) + " ('" + bytes_to_printable(m.left) + "' '" +
                                  bytes_to_printable(m.right) + "') refers to a missing vocab entry");
      // First occurrence wins if a pair is listed twice.
      merge_table_.try_emplace(pair_key(*l, *r), MergeTarget{static_cast<std::uint32_t>(rank), *out});
    }
    for (int b = 0; b < 256; ++b) {
      auto id = find(std::string(1, static_cast<char>(b)));
      byte_tokens_[b] = id.value_or(kNoToken);
      if (!id) has_all_bytes_ = false;
    }
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& bytes(TokenId id) const {
    if (id >= tokens_.size())
      fail(ErrorKind::data, "invalid token id " + std::to_string(id) + " (vocab size " + std::to_string(size()) + ")");
    return tokens_[id];
  }

  std::optional<TokenId> find(std::string_view bytes) const {
    auto it = index_.find(std::string(bytes));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<MergeRule>& merges() const { return merges_; }

  struct MergeTarget {
    std::uint32_t rank;
    TokenId merged;
  };

  std::optional<MergeTarget> merge(TokenId left, TokenId right) const {
    auto it = merge_table_.find(pair_key(left, right));
    if (it == merge_table_.end()) return std::nullopt;
    return it->second;
  }

  // True when every single byte has its own token, so any input can be encoded.
  bool covers_all_bytes() const { return has_all_bytes_ && !tokens_.empty(); }

  std::optional<TokenId> byte_token(unsigned char b) const {
    if (byte_tokens_[b] == kNoToken) return std::nullopt;
    return byte_tokens_[b];
  }

  // GPT-2 asset layout: a JSON object {printable token: id} and a merges file with one
  // space-separated printable pair per line.
  static Vocab load_gpt2(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(vocab_json));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, vocab_json.string() + ": " + e.what());
    }
    if (!j.is_object()) fail(ErrorKind::data, vocab_json.string() + ": expected a JSON object");
    std::vector<std::string> tokens(j.size());
    std::vector<bool> seen(j.size(), false);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.value().is_number_unsigned()) fail(ErrorKind::data, vocab_json.string() + ": non-integer id for '" + it.key() + "'");
      const auto id = it.value().get<std::uint64_t>();
      if (id >= tokens.size() || seen[id])
        fail(ErrorKind::data, vocab_json.string() + ": ids must be dense 0..V-1 (bad id " + std::to_string(id) + ")");
      seen[id] = true;
      tokens[id] = printable_to_bytes(it.key());
    }
    return Vocab(std::move(tokens), parse_merges(read_file(merges_txt), merges_txt.string()));
  }

  static std::vector<MergeRule> parse_merges(std::string_view text, const std::string& origin = "merges") {
    std::vector<MergeRule> merges;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty() || line.starts_with("#version")) continue;
      const auto sp = line.find(' ');
      if (sp == std::string_view::npos || sp == 0 || sp + 1 >= line.size() || line.find(' ', sp + 1) != std::string_view::npos)
        fail(ErrorKind::data, origin + ":" + std::to_string(line_no) + ": expected 'left right'");
      merges.push_back({printable_to_bytes(line.substr(0, sp)), printable_to_bytes(line.substr(sp + 1))});
    }
    return merges;
  }

  std::string vocab_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) j[bytes_to_printable(tokens_[i])] = i;
    return j.dump();
  }

  std::string merges_text() const {
    std::string out = "#version: 0.2\n";
    for (const auto& m : merges_) out += bytes_to_printable(m.left) + " " + bytes_to_printable(m.right) + "\n";
    return out;
  }

  void save_gpt2(const std::filesystem::path& vocab_json_path, const std::filesystem::path& merges_path) const {
    write_file_atomic(vocab_json_path, vocab_json());
    write_file_atomic(merges_path, merges_text());
  }

 private:
  static constexpr TokenId kNoToken = static_cast<TokenId>(-1);

  static std::uint64_t pair_key(TokenId l, TokenId r) { return (static_cast<std::uint64_t>(l) << 32) | r; }

  std::vector<std::string> tokens_;
  std::vector<MergeRule> merges_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::uint64_t, MergeTarget> merge_table_;
  std::array<TokenId, 256> byte_tokens_{};
  bool has_all_bytes_ = true;
};

}  // namespace lmgame
