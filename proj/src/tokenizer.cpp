#include <string_view>

#include "fusionkit/text.hpp"

namespace fusionkit {

namespace {

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_word(char c) noexcept {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '_' || u >= 0x80;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != prefix[i]) return false;
  }
  return true;
}

bool is_url_start(std::string_view rest) noexcept {
  return starts_with_ci(rest, "http://") || starts_with_ci(rest, "https://") || starts_with_ci(rest, "www.");
}

bool is_url_trailer(char c) noexcept {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case ')': case ']': case '}': case '\'': case '"':
      return true;
    default:
      return false;
  }
}

bool starts_tag(std::string_view chunk, std::size_t p) noexcept {
  return (chunk[p] == '@' || chunk[p] == '#') && p + 1 < chunk.size() && is_word(chunk[p + 1]);
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::size_t p = 0;
  const std::size_t n = chunk.size();
  while (p < n) {
    if (is_url_start(chunk.substr(p))) {
      std::size_t end = n;
      while (end > p && is_url_trailer(chunk[end - 1])) --end;
      if (end > p) out.emplace_back(chunk.substr(p, end - p));
      if (end < n) out.emplace_back(chunk.substr(end));
      return;
    }
    const std::size_t start = p;
    if (starts_tag(chunk, p)) {
      ++p;
      while (p < n && is_word(chunk[p])) ++p;
    } else if (is_word(chunk[p])) {
      while (p < n && is_word(chunk[p])) ++p;
      while (p + 1 < n && chunk[p] == '\'' && is_word(chunk[p + 1])) {
        ++p;
        while (p < n && is_word(chunk[p])) ++p;
      }
    } else {
      while (p < n && !is_word(chunk[p]) && !starts_tag(chunk, p)) ++p;
    }
    out.emplace_back(chunk.substr(start, p - start));
  }
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::size_t p = 0;
  while (p < text.size()) {
    while (p < text.size() && is_space(text[p])) ++p;
    const std::size_t start = p;
    while (p < text.size() && !is_space(text[p])) ++p;
    if (p > start) tokenize_chunk(text.substr(start, p - start), seq.tokens);
  }
  return seq;
}

}  // namespace fusionkit
