#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "kkr/errors.hpp"

namespace kkr {

// 17 significant digits round-trips every finite double.
inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view row) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = row.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(row.substr(start));
      return out;
    }
    out.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(std::string_view field, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("'" + std::string(field) + "' is not a number", line);
  }
  return value;
}

inline std::int64_t parse_int(std::string_view field, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("'" + std::string(field) + "' is not an integer", line);
  }
  return value;
}

}  // namespace kkr
