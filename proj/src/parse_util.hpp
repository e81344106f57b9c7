#pragma once

#include <charconv>
#include <cmath>
#include <string_view>
#include <vector>

namespace fusionkit::detail {

/// Splits on runs of spaces/tabs.
inline void split_fields(std::string_view line, std::vector<std::string_view>& out, char extra = ' ') {
  out.clear();
  std::size_t p = 0;
  auto sep = [extra](char c) { return c == ' ' || c == '\t' || c == extra; };
  while (p < line.size()) {
    while (p < line.size() && sep(line[p])) ++p;
    const std::size_t start = p;
    while (p < line.size() && !sep(line[p])) ++p;
    if (p > start) out.push_back(line.substr(start, p - start));
  }
}

/// Parses a finite decimal double; the whole field must be consumed.
inline bool parse_double(std::string_view field, double& out) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace fusionkit::detail
