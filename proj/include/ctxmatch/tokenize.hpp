#pragma once

// Tokenization is an explicit mode, not auto-detected: character mode for
// scripts without whitespace word boundaries, word mode otherwise. The PII
// mask token survives as a single atomic token in both modes.

#include <string>
#include <string_view>
#include <vector>

#include "ctxmatch/util.hpp"

namespace ctxmatch {

enum class TokenizeMode { Word, Character };

inline TokenizeMode tokenize_mode_from_string(std::string_view s) {
  if (s == "word") return TokenizeMode::Word;
  if (s == "char" || s == "character") return TokenizeMode::Character;
  fail("unknown tokenize mode '", s, "' (expected word|char)");
}

inline const char* to_string(TokenizeMode m) {
  return m == TokenizeMode::Word ? "word" : "char";
}

namespace detail {
inline bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
}  // namespace detail

// Word mode: whitespace-delimited, ASCII-lowercased tokens.
// Character mode: one token per UTF-8 codepoint, whitespace skipped,
// ASCII letters lowercased.
inline std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode,
                                         std::string_view mask_token = "<MASK>") {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (detail::is_ws(text[i])) {
      ++i;
      continue;
    }
    if (!mask_token.empty() && text.compare(i, mask_token.size(), mask_token) == 0) {
      out.emplace_back(lower_ascii(mask_token));
      i += mask_token.size();
      continue;
    }
    if (mode == TokenizeMode::Word) {
      std::size_t j = i;
      while (j < text.size() && !detail::is_ws(text[j])) ++j;
      // a mask token glued to the end of a word still splits off
      auto mask_pos = text.substr(i, j - i).find(mask_token);
      if (!mask_token.empty() && mask_pos != std::string_view::npos && mask_pos > 0)
        j = i + mask_pos;
      out.push_back(lower_ascii(text.substr(i, j - i)));
      i = j;
    } else {
      unsigned char lead = static_cast<unsigned char>(text[i]);
      std::size_t len = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
      if (i + len > text.size()) len = 1;
      out.push_back(lower_ascii(text.substr(i, len)));
      i += len;
    }
  }
  return out;
}

}  // namespace ctxmatch
