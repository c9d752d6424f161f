#pragma once

// 128-bit integer helpers. Affine layers accumulate exact dyadic values
// (integer * 2^exponent) in 128-bit lanes.

#include <cstdint>
#include <string>

namespace lutnet {

using Wide = __int128;
using UWide = unsigned __int128;

inline constexpr Wide kWideMax = static_cast<Wide>(~static_cast<UWide>(0) >> 1);

inline UWide wide_abs(Wide v) {
  return v < 0 ? static_cast<UWide>(0) - static_cast<UWide>(v) : static_cast<UWide>(v);
}

/// Number of significant bits of |v| (0 for v == 0).
inline unsigned bit_length(UWide v) {
  const auto hi = static_cast<std::uint64_t>(v >> 64);
  const auto lo = static_cast<std::uint64_t>(v);
  if (hi != 0) return 128u - static_cast<unsigned>(__builtin_clzll(hi));
  if (lo != 0) return 64u - static_cast<unsigned>(__builtin_clzll(lo));
  return 0;
}

/// Two's-complement width needed to hold every value in [-bound, bound].
inline unsigned signed_width(UWide bound) { return bit_length(bound) + 1; }

/// v * 2^shift for shift >= 0; for shift < 0 divides by 2^-shift with
/// round-half-to-even. Caller guarantees the left shift does not overflow.
inline Wide shift_round_even(Wide v, int shift) {
  if (shift >= 0) return v << shift;
  const int d = -shift;
  if (d >= 127) {
    // |v| < 2^126 <= 2^(d-1): rounds to zero.
    return 0;
  }
  const Wide q = v >> d;  // floor
  const Wide rem = v - (q << d);
  const Wide half = static_cast<Wide>(1) << (d - 1);
  if (rem > half || (rem == half && (q & 1) != 0)) return q + 1;
  return q;
}

std::string to_string(Wide v);
std::string to_string(UWide v);
Wide parse_wide(const std::string& text);

}  // namespace lutnet
