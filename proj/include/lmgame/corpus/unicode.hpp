#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace lmgame::unicode {

// One decoded unit of a byte string. Invalid UTF-8 bytes come out one at a time with
// codepoint < 0.
struct CodeUnit {
  std::int32_t codepoint;
  std::size_t offset;
  std::size_t length;

  bool valid() const { return codepoint >= 0; }
};

inline std::vector<CodeUnit> decode(std::string_view bytes) {
  std::vector<CodeUnit> out;
  out.reserve(bytes.size());
  const auto* s = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const auto n = static_cast<std::int32_t>(bytes.size());
  std::int32_t i = 0;
  while (i < n) {
    const std::int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(s, i, n, c);
    if (c < 0) {
      // U8_NEXT may swallow a truncated lead+continuation; report bytes individually.
      for (std::int32_t b = start; b < i; ++b) out.push_back({-1, static_cast<std::size_t>(b), 1});
    } else {
      out.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)});
    }
  }
  return out;
}

inline bool is_valid_utf8(std::string_view bytes) {
  for (const auto& u : decode(bytes))
    if (!u.valid()) return false;
  return true;
}

inline bool is_letter(std::int32_t c) { return c >= 0 && u_isalpha(c); }

inline bool is_number(std::int32_t c) {
  if (c < 0) return false;
  const auto t = u_charType(c);
  return t == U_DECIMAL_DIGIT_NUMBER || t == U_LETTER_NUMBER || t == U_OTHER_NUMBER;
}

inline bool is_space(std::int32_t c) { return c >= 0 && u_isUWhiteSpace(c); }

// Characters that render as nothing: whitespace, controls, and format characters
// such as zero-width joiners.
inline bool is_invisible(std::int32_t c) {
  if (c < 0) return false;
  if (is_space(c)) return true;
  const auto t = u_charType(c);
  return t == U_CONTROL_CHAR || t == U_FORMAT_CHAR || u_hasBinaryProperty(c, UCHAR_DEFAULT_IGNORABLE_CODE_POINT);
}

inline constexpr std::string_view kInvalidMarker = "<?>";

// Copies valid UTF-8 through and replaces each maximal run of undecodable bytes with "<?>".
inline std::string render(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  bool in_invalid = false;
  for (const auto& u : decode(bytes)) {
    if (!u.valid()) {
      if (!in_invalid) out.append(kInvalidMarker);
      in_invalid = true;
      continue;
    }
    in_invalid = false;
    out.append(bytes.substr(u.offset, u.length));
  }
  return out;
}

}  // namespace lmgame::unicode
