#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "headscope/detail/unicode_tables.hpp"

namespace headscope::detail {

template <typename Table>
bool in_ranges(const Table& table, char32_t cp) {
  auto it = std::upper_bound(table.begin(), table.end(), static_cast<std::uint32_t>(cp),
                             [](std::uint32_t v, const CodepointRange& r) { return v < r.first; });
  if (it == table.begin()) return false;
  --it;
  return cp <= it->last;
}

inline bool is_letter(char32_t cp) { return in_ranges(kLetterRanges, cp); }
inline bool is_number(char32_t cp) { return in_ranges(kNumberRanges, cp); }
inline bool is_space(char32_t cp) { return in_ranges(kSpaceRanges, cp); }

/// One decoded codepoint. Invalid UTF-8 yields a single-byte unit with
/// `valid == false` so tokenization stays total.
struct Utf8Unit {
  char32_t cp = 0;
  std::size_t length = 1;
  bool valid = false;
};

inline Utf8Unit decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1, true};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {b0, 1, false};
  }
  if (pos + len > s.size()) return {b0, 1, false};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {b0, 1, false};
    cp = (cp << 6) | (b & 0x3F);
  }
  const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
  if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {b0, 1, false};
  return {cp, len, true};
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    const auto u = decode_utf8(s, i);
    if (!u.valid) return false;
    i += u.length;
  }
  return true;
}

}  // namespace headscope::detail
