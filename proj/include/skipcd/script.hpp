#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skipcd/error.hpp"

namespace skipcd {

enum class Script { kHan, kKana, kCyrillic, kThai, kTelugu, kBengali, kLatin };

inline Script parse_script(std::string_view name) {
  if (name == "han") return Script::kHan;
  if (name == "kana") return Script::kKana;
  if (name == "cyrillic") return Script::kCyrillic;
  if (name == "thai") return Script::kThai;
  if (name == "telugu") return Script::kTelugu;
  if (name == "bengali") return Script::kBengali;
  if (name == "latin") return Script::kLatin;
  throw Error("unknown script '" + std::string(name) + "'");
}

inline const char* script_name(Script s) {
  switch (s) {
    case Script::kHan: return "han";
    case Script::kKana: return "kana";
    case Script::kCyrillic: return "cyrillic";
    case Script::kThai: return "thai";
    case Script::kTelugu: return "telugu";
    case Script::kBengali: return "bengali";
    case Script::kLatin: return "latin";
  }
  return "?";
}

// Unicode block ranges (inclusive) per script.
inline const std::vector<std::pair<char32_t, char32_t>>& script_ranges(Script s) {
  static const std::vector<std::pair<char32_t, char32_t>> han = {
      {0x3400, 0x4DBF}, {0x4E00, 0x9FFF}, {0xF900, 0xFAFF}, {0x20000, 0x2A6DF}, {0x2A700, 0x2EBEF}, {0x30000, 0x3134F}};
  static const std::vector<std::pair<char32_t, char32_t>> kana = {{0x3040, 0x309F}, {0x30A0, 0x30FF}, {0x31F0, 0x31FF}, {0xFF66, 0xFF9F}};
  static const std::vector<std::pair<char32_t, char32_t>> cyrillic = {{0x0400, 0x04FF}, {0x0500, 0x052F}};
  static const std::vector<std::pair<char32_t, char32_t>> thai = {{0x0E00, 0x0E7F}};
  static const std::vector<std::pair<char32_t, char32_t>> telugu = {{0x0C00, 0x0C7F}};
  static const std::vector<std::pair<char32_t, char32_t>> bengali = {{0x0980, 0x09FF}};
  static const std::vector<std::pair<char32_t, char32_t>> latin = {
      {0x0041, 0x005A}, {0x0061, 0x007A}, {0x00C0, 0x00D6}, {0x00D8, 0x00F6}, {0x00F8, 0x024F}, {0x1E00, 0x1EFF}};
  switch (s) {
    case Script::kHan: return han;
    case Script::kKana: return kana;
    case Script::kCyrillic: return cyrillic;
    case Script::kThai: return thai;
    case Script::kTelugu: return telugu;
    case Script::kBengali: return bengali;
    case Script::kLatin: return latin;
  }
  return latin;
}

inline bool in_script(char32_t cp, Script s) {
  for (const auto& [lo, hi] : script_ranges(s))
    if (cp >= lo && cp <= hi) return true;
  return false;
}

namespace utf8 {

// Expected sequence length from a lead byte, 0 for continuation/invalid.
inline int sequence_length(unsigned char b) {
  if (b < 0x80) return 1;
  if ((b & 0xE0) == 0xC0) return b >= 0xC2 ? 2 : 0;
  if ((b & 0xF0) == 0xE0) return 3;
  if ((b & 0xF8) == 0xF0) return b <= 0xF4 ? 4 : 0;
  return 0;
}

// Decodes one complete well-formed code point, rejecting overlongs and
// surrogates.
inline std::optional<char32_t> decode_one(std::string_view s) {
  if (s.empty()) return std::nullopt;
  const auto b0 = static_cast<unsigned char>(s[0]);
  const int len = sequence_length(b0);
  if (len == 0 || static_cast<int>(s.size()) != len) return std::nullopt;
  if (len == 1) return b0;
  char32_t cp = b0 & (0xFF >> (len + 1));
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  return cp;
}

// The trailing bytes of `text` that form an unfinished (but so far valid)
// UTF-8 sequence; empty if the text ends on a boundary.
inline std::string pending_suffix(std::string_view text) {
  const std::size_t n = text.size();
  for (std::size_t back = 1; back <= 3 && back <= n; ++back) {
    const auto b = static_cast<unsigned char>(text[n - back]);
    if ((b & 0xC0) == 0x80) continue;
    const int len = sequence_length(b);
    if (len > static_cast<int>(back)) return std::string(text.substr(n - back));
    return {};
  }
  return {};
}

}  // namespace utf8

// True if appending `token_bytes` to the unfinished sequence `pending`
// completes at least one code point belonging to `script`. Partial or invalid
// sequences never count.
inline bool completes_script_char(std::string_view pending, std::string_view token_bytes, Script script) {
  if (token_bytes.empty()) return false;
  const std::string buf = std::string(pending) + std::string(token_bytes);
  std::size_t i = 0;
  while (i < buf.size()) {
    const int len = utf8::sequence_length(static_cast<unsigned char>(buf[i]));
    if (len == 0 || i + static_cast<std::size_t>(len) > buf.size()) {
      ++i;
      continue;
    }
    // only code points whose last byte comes from this token are "completed" by it
    const bool ends_in_token = i + static_cast<std::size_t>(len) > pending.size();
    if (auto cp = utf8::decode_one(std::string_view(buf).substr(i, static_cast<std::size_t>(len)))) {
      if (ends_in_token && in_script(*cp, script)) return true;
      i += static_cast<std::size_t>(len);
    } else {
      ++i;
    }
  }
  return false;
}

}  // namespace skipcd
