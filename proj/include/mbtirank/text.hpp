#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mbtirank::text {

constexpr bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

constexpr char to_upper(char c) {
  return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
}

std::string_view trim(std::string_view s);

/// Half-open byte ranges of whitespace-delimited tokens.
struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};
std::vector<TokenSpan> token_spans(std::string_view s);

}  // namespace mbtirank::text
