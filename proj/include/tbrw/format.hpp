#pragma once

#include <array>
#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "tbrw/error.hpp"

namespace tbrw {

/// 17 significant digits with '.' as the decimal point, whatever the locale.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  if (res.ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf.data(), res.ptr);
}

inline double parse_double_exact(std::string_view s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty())
    throw ConfigError("not a number: '" + std::string(s) + "'");
  return x;
}

}  // namespace tbrw
