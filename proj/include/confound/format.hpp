#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "confound/errors.hpp"

namespace confound {

// Shortest decimal representation that round-trips the exact double.
inline std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("cannot parse number '" + std::string(s) + "' in " + context);
  }
  return v;
}

inline long long parse_int(std::string_view s, const std::string& context) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("cannot parse integer '" + std::string(s) + "' in " + context);
  }
  return v;
}

}  // namespace confound
