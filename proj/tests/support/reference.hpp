#pragma once

// Test-side oracles. Nothing here calls into the library's arithmetic: values
// are plain integers on explicit binary grids, binary16 is decoded with
// ldexp, and rounding is written out longhand.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace ref {

using i128 = __int128;

/// Weights k / 2^8 with |k| <= 255: exact in float32 and on a known grid.
inline constexpr int kWeightShift = 8;

inline std::vector<float> dyadic_weights(std::size_t n, std::mt19937_64& rng, int max_k = 255) {
  std::uniform_int_distribution<int> d(-max_k, max_k);
  std::vector<float> w(n);
  for (auto& v : w) v = static_cast<float>(std::ldexp(d(rng), -kWeightShift));
  return w;
}

inline std::int64_t weight_integer(float w) { return static_cast<std::int64_t>(std::ldexp(w, kWeightShift)); }

/// Round v * 2^from to the grid 2^to (to >= from) with ties to even.
inline i128 round_half_even(i128 v, int from, int to) {
  const int s = to - from;
  if (s <= 0) return v * (i128{1} << -s);
  const i128 unit = i128{1} << s;
  i128 q = v / unit, r = v % unit;
  if (r < 0) {  // floor division
    r += unit;
    q -= 1;
  }
  const i128 half = unit / 2;
  if (r > half || (r == half && (q & 1) != 0)) ++q;
  return q;
}

/// Two's-complement or unsigned fixed-point code of the saturated integer.
struct Fixed {
  unsigned bits;
  bool is_signed;
  int scale;

  std::int64_t lo() const { return is_signed ? -(std::int64_t{1} << (bits - 1)) : 0; }
  std::int64_t hi() const { return is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1; }
  std::int64_t decode(std::uint32_t code) const {
    if (is_signed && (code >> (bits - 1)) != 0) return static_cast<std::int64_t>(code) - (std::int64_t{1} << bits);
    return code;
  }
  std::uint32_t encode(i128 v) const {
    const i128 c = v < lo() ? i128{lo()} : v > hi() ? i128{hi()} : v;
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(static_cast<std::int64_t>(c)) &
                                      ((std::uint64_t{1} << bits) - 1));
  }
  /// Code of the exact value acc * 2^exponent.
  std::uint32_t round(i128 acc, int exponent) const { return encode(round_half_even(acc, exponent, scale)); }
};

/// y = W x + b on integer grids: x in units of 2^x_scale, weights and bias
/// in units of 2^-8. Result in units of 2^(x_scale - 8); needs x_scale <= 0.
inline std::vector<i128> dense_exact(const std::vector<float>& w, const std::vector<float>& b, std::size_t p,
                                     std::size_t q, const std::vector<std::int64_t>& x, int x_scale) {
  std::vector<i128> y(p);
  for (std::size_t j = 0; j < p; ++j) {
    i128 acc = b.empty() ? 0 : i128{weight_integer(b[j])} << -x_scale;
    for (std::size_t i = 0; i < q; ++i) acc += i128{weight_integer(w[j * q + i])} * x[i];
    y[j] = acc;
  }
  return y;
}

/// "Same" cross-correlation, zero padding; kernel [ky][kx][ci][co]; x is
/// H x W x C_in in units of 2^x_scale. Result in units of 2^(x_scale - 8).
inline std::vector<i128> conv_exact(const std::vector<float>& k, const std::vector<float>& b, std::size_t r,
                                    std::size_t cin, std::size_t cout, std::size_t H, std::size_t W,
                                    const std::vector<std::int64_t>& x, int x_scale) {
  const long K = static_cast<long>(2 * r + 1);
  std::vector<i128> y(H * W * cout);
  for (long oy = 0; oy < static_cast<long>(H); ++oy)
    for (long ox = 0; ox < static_cast<long>(W); ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        i128 acc = b.empty() ? 0 : i128{weight_integer(b[co])} << -x_scale;
        for (long ky = 0; ky < K; ++ky)
          for (long kx = 0; kx < K; ++kx) {
            const long iy = oy + ky - static_cast<long>(r), ix = ox + kx - static_cast<long>(r);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci)
              acc += i128{weight_integer(k[((ky * K + kx) * cin + ci) * cout + co])} *
                     x[(static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin + ci];
          }
        y[(static_cast<std::size_t>(oy) * W + static_cast<std::size_t>(ox)) * cout + co] = acc;
      }
  return y;
}

/// IEEE binary16 decode: sign, 5-bit exponent (bias 15), 10 fraction bits.
inline double half_to_double(std::uint16_t h) {
  const int sign = h >> 15, e = (h >> 10) & 0x1f, f = h & 0x3ff;
  double v;
  if (e == 0) v = std::ldexp(f, -24);
  else if (e == 31) v = f == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  else v = std::ldexp(1024 + f, e - 25);
  return sign ? -v : v;
}

inline constexpr std::uint16_t kHalfMinSubnormal = 0x0001;
inline constexpr std::uint16_t kHalfMaxNormal = 0x7bff;

/// Every set partition of {0..n-1}, blocks in order of their smallest element.
inline std::vector<std::vector<std::vector<std::uint32_t>>> set_partitions(std::uint32_t n) {
  std::vector<std::vector<std::vector<std::uint32_t>>> out;
  std::vector<std::vector<std::uint32_t>> cur;
  std::function<void(std::uint32_t)> rec = [&](std::uint32_t i) {
    if (i == n) {
      out.push_back(cur);
      return;
    }
    // Index, not reference: the recursion below may reallocate `cur`.
    for (std::size_t b = 0; b < cur.size(); ++b) {
      cur[b].push_back(i);
      rec(i + 1);
      cur[b].pop_back();
    }
    cur.push_back({i});
    rec(i + 1);
    cur.pop_back();
  };
  rec(0);
  return out;
}

}  // namespace ref
