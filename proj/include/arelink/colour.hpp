#pragma once

#include "arelink/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace arelink {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  std::string hex() const {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02X%02X%02X", r, g, b);
    return buf;
  }

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

namespace detail {

struct NamedColour {
  std::string_view name;
  std::uint32_t rgb;
};

// R colour names used by the workflow's map calls, plus common basics.
inline constexpr std::array<NamedColour, 44> kNamedColours{{
    {"antiquewhite", 0xFAEBD7}, {"antiquewhite1", 0xFFEFDB}, {"antiquewhite2", 0xEEDFCC},
    {"black", 0x000000},        {"blue", 0x0000FF},          {"brown", 0xA52A2A},
    {"cyan", 0x00FFFF},         {"darkblue", 0x00008B},      {"darkgreen", 0x006400},
    {"darkred", 0x8B0000},      {"firebrick", 0xB22222},     {"firebrick4", 0x8B1A1A},
    {"gold", 0xFFD700},         {"gray", 0xBEBEBE},          {"gray10", 0x1A1A1A},
    {"gray30", 0x4D4D4D},       {"gray50", 0x7F7F7F},        {"gray70", 0xB3B3B3},
    {"gray90", 0xE5E5E5},       {"green", 0x00FF00},         {"grey", 0xBEBEBE},
    {"grey30", 0x4D4D4D},       {"grey50", 0x7F7F7F},        {"grey90", 0xE5E5E5},
    {"ivory", 0xFFFFF0},        {"lightblue", 0xADD8E6},     {"lightgray", 0xD3D3D3},
    {"lightgrey", 0xD3D3D3},    {"magenta", 0xFF00FF},       {"navy", 0x000080},
    {"orange", 0xFFA500},       {"pink", 0xFFC0CB},          {"purple", 0xA020F0},
    {"red", 0xFF0000},          {"royalblue", 0x4169E1},     {"salmon", 0xFA8072},
    {"skyblue", 0x87CEEB},      {"steelblue", 0x4682B4},     {"tan", 0xD2B48C},
    {"tomato", 0xFF6347},       {"violet", 0xEE82EE},        {"wheat", 0xF5DEB3},
    {"white", 0xFFFFFF},        {"yellow", 0xFFFF00},
}};

inline int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace detail

/// Resolves a colour name from the built-in table, or "#RGB" / "#RRGGBB".
inline Rgb parse_colour(std::string_view token) {
  std::string t(token);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (!t.empty() && t[0] == '#' && (t.size() == 7 || t.size() == 4)) {
    const bool shortform = t.size() == 4;
    int v[6];
    for (std::size_t i = 1; i < t.size(); ++i)
      if ((v[i - 1] = detail::hex_digit(t[i])) < 0) throw InputError("bad colour '" + std::string(token) + "'");
    if (shortform)
      return {static_cast<std::uint8_t>(v[0] * 17), static_cast<std::uint8_t>(v[1] * 17),
              static_cast<std::uint8_t>(v[2] * 17)};
    return {static_cast<std::uint8_t>(v[0] * 16 + v[1]), static_cast<std::uint8_t>(v[2] * 16 + v[3]),
            static_cast<std::uint8_t>(v[4] * 16 + v[5])};
  }
  for (const auto& c : detail::kNamedColours)
    if (c.name == t)
      return {static_cast<std::uint8_t>(c.rgb >> 16), static_cast<std::uint8_t>((c.rgb >> 8) & 0xFF),
              static_cast<std::uint8_t>(c.rgb & 0xFF)};
  throw InputError("unknown colour '" + std::string(token) + "'");
}

inline Rgb lerp(Rgb a, Rgb b, double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + t * (static_cast<double>(y) - x)));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

/// Three-anchor diverging scale. Values are rescaled around the midpoint by
/// the largest absolute deviation in the data, so the more extreme side
/// reaches its end colour; out-of-range values clamp.
class DivergingScale {
 public:
  DivergingScale(Rgb low, Rgb mid, Rgb high, double midpoint, double max_deviation)
      : low_(low), mid_(mid), high_(high), midpoint_(midpoint), dev_(max_deviation) {}

  Rgb operator()(double v) const {
    if (!(dev_ > 0) || !std::isfinite(v) || v == midpoint_) return mid_;
    const double t = (v - midpoint_) / dev_;
    return t < 0 ? lerp(mid_, low_, -t) : lerp(mid_, high_, t);
  }

 private:
  Rgb low_, mid_, high_;
  double midpoint_;
  double dev_;
};

}  // namespace arelink
