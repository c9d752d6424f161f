#include "lutnet/formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// v = mantissa * 2^exponent with a 53-bit integer mantissa.
void decompose(double v, std::int64_t& mantissa, int& exponent) {
  int e = 0;
  const double frac = std::frexp(v, &e);
  mantissa = static_cast<std::int64_t>(std::ldexp(frac, 53));
  exponent = e - 53;
}

Code round_fixed(Wide v, int exponent, const FixedFormat& f) {
  const int shift = exponent - f.scale;
  Wide n = 0;
  if (shift > 0) {
    if (v != 0 && bit_length(wide_abs(v)) + static_cast<unsigned>(shift) > 64) {
      return f.encode_integer(v < 0 ? f.min_integer() : f.max_integer());
    }
    n = v << shift;
  } else {
    n = shift_round_even(v, shift);
  }
  n = std::clamp<Wide>(n, f.min_integer(), f.max_integer());
  return f.encode_integer(static_cast<std::int64_t>(n));
}

Code max_finite(const FloatFormat& f) {
  return (f.max_exponent_field() << f.fraction_bits()) | ((1u << f.fraction_bits()) - 1);
}

Code round_float(Wide v, int exponent, const FloatFormat& f) {
  if (v == 0) return 0;
  const bool negative = v < 0;
  if (negative && !f.has_sign) return 0;
  const Code sign_bit = negative ? (Code{1} << (f.fraction_bits() + f.exponent_bits)) : 0;
  const UWide a = wide_abs(v);
  const int n = static_cast<int>(f.mantissa_bits);
  const int lead = static_cast<int>(bit_length(a)) - 1 + exponent;
  const int emin = 1 - f.bias;
  int qe = std::max(lead, emin) - (n - 1);
  const int d = qe - exponent;
  UWide m = 0;
  if (d <= 0) {
    m = a << -d;
  } else {
    m = static_cast<UWide>(shift_round_even(static_cast<Wide>(a), -d));
  }
  const UWide top = static_cast<UWide>(1) << n;
  if (m == top) {
    m >>= 1;
    ++qe;
  }
  const UWide implicit = static_cast<UWide>(1) << (n - 1);
  long exponent_field = 0;
  Code frac = 0;
  if (m >= implicit) {
    exponent_field = static_cast<long>(qe) + (n - 1) + f.bias;
    frac = static_cast<Code>(m - implicit);
  } else {
    frac = static_cast<Code>(m);
  }
  if (exponent_field > static_cast<long>(f.max_exponent_field())) return sign_bit | max_finite(f);
  return sign_bit | (static_cast<Code>(exponent_field) << f.fraction_bits()) | frac;
}

// Ordered key: negative values map below zero, monotone in value.
std::int64_t float_key(Code c, const FloatFormat& f) {
  const Code magnitude = c & ((Code{1} << (f.fraction_bits() + f.exponent_bits)) - 1);
  return float_sign(c, f) != 0 ? -static_cast<std::int64_t>(magnitude)
                                : static_cast<std::int64_t>(magnitude);
}

Code float_from_key(std::int64_t key, const FloatFormat& f) {
  if (key < 0) return (Code{1} << (f.fraction_bits() + f.exponent_bits)) | static_cast<Code>(-key);
  return static_cast<Code>(key);
}

// Neighbouring code in value order (dir = +1 or -1), saturating.
Code step_code(Code c, const Format& fmt, int dir) {
  return std::visit(
      overloaded{[&](const FixedFormat& f) {
                   const std::int64_t v = std::clamp<std::int64_t>(f.integer(c) + dir, f.min_integer(),
                                                                   f.max_integer());
                   return f.encode_integer(v);
                 },
                 [&](const FloatFormat& f) {
                   const auto lim = static_cast<std::int64_t>(max_finite(f));
                   std::int64_t key = float_key(c, f) + dir;
                   // +0 and -0 share a value; skip -0.
                   if (key == 0 && dir < 0 && float_key(c, f) == 0) key = -1;
                   const std::int64_t lo = f.has_sign ? -lim : 0;
                   return float_from_key(std::clamp<std::int64_t>(key, lo, lim), f);
                 }},
      fmt);
}

}  // namespace

std::int64_t FixedFormat::integer(Code code) const {
  if (!is_signed) return static_cast<std::int64_t>(code);
  const std::uint64_t raw = code & ((std::uint64_t{1} << bits) - 1);
  const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
  return static_cast<std::int64_t>(raw ^ sign) - static_cast<std::int64_t>(sign);
}

Code FixedFormat::encode_integer(std::int64_t v) const {
  return static_cast<Code>(static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << bits) - 1));
}

void validate(const Format& fmt) {
  std::visit(overloaded{[](const FixedFormat& f) {
                          if (f.bits < 1 || f.bits > kMaxFormatBits)
                            throw DomainError("fixed-point width must be in [1, 32], got " +
                                              std::to_string(f.bits));
                          if (f.scale < -256 || f.scale > 256)
                            throw DomainError("fixed-point scale out of range");
                        },
                        [](const FloatFormat& f) {
                          if (f.mantissa_bits < 2)
                            throw DomainError("float precision must be at least 2 bits");
                          if (f.exponent_bits < 1 || f.exponent_bits > 11)
                            throw DomainError("float exponent width must be in [1, 11]");
                          if (f.width() > kMaxFormatBits)
                            throw DomainError("float width exceeds 32 bits");
                        }},
             fmt);
}

unsigned width(const Format& fmt) {
  return std::visit(overloaded{[](const FixedFormat& f) { return f.bits; },
                               [](const FloatFormat& f) { return f.width(); }},
                    fmt);
}

int quantum_exponent(const Format& fmt) {
  return std::visit(overloaded{[](const FixedFormat& f) { return f.scale; },
                               [](const FloatFormat& f) { return f.min_quantum_exponent(); }},
                    fmt);
}

bool is_signed(const Format& fmt) {
  return std::visit(overloaded{[](const FixedFormat& f) { return f.is_signed; },
                               [](const FloatFormat& f) { return f.has_sign; }},
                    fmt);
}

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || s.empty())
    throw DomainError("bad number in format name '" + std::string(whole) + "'");
  return v;
}

}  // namespace

Format parse_format(std::string_view text) {
  Format out;
  if (text == "binary16") {
    out = FloatFormat::binary16();
  } else if (text == "e4m3" || text == "minifloat-e4m3-style") {
    out = FloatFormat::e4m3();
  } else if (!text.empty() && (text[0] == 'u' || text[0] == 's')) {
    FixedFormat f;
    f.is_signed = text[0] == 's';
    const auto at = text.find('@');
    f.bits = static_cast<unsigned>(parse_int(text.substr(1, at == std::string_view::npos ? text.npos : at - 1), text));
    if (at != std::string_view::npos) f.scale = parse_int(text.substr(at + 1), text);
    out = f;
  } else if (!text.empty() && text[0] == 'f') {
    // f<n>e<t>[b<bias>][u]
    FloatFormat f;
    std::string_view rest = text.substr(1);
    if (!rest.empty() && rest.back() == 'u') {
      f.has_sign = false;
      rest.remove_suffix(1);
    }
    const auto e = rest.find('e');
    if (e == std::string_view::npos) throw DomainError("bad float format name '" + std::string(text) + "'");
    f.mantissa_bits = static_cast<unsigned>(parse_int(rest.substr(0, e), text));
    std::string_view exp_part = rest.substr(e + 1);
    const auto b = exp_part.find('b');
    f.exponent_bits = static_cast<unsigned>(parse_int(exp_part.substr(0, b), text));
    f.bias = b == std::string_view::npos ? (1 << (f.exponent_bits - 1)) - 1
                                         : parse_int(exp_part.substr(b + 1), text);
    out = f;
  } else {
    throw DomainError("unknown format name '" + std::string(text) + "'");
  }
  validate(out);
  return out;
}

std::string to_string(const Format& fmt) {
  return std::visit(
      overloaded{[](const FixedFormat& f) {
                   std::string s = (f.is_signed ? "s" : "u") + std::to_string(f.bits);
                   if (f.scale != 0) s += "@" + std::to_string(f.scale);
                   return s;
                 },
                 [](const FloatFormat& f) {
                   if (f == FloatFormat::binary16()) return std::string("binary16");
                   if (f == FloatFormat::e4m3()) return std::string("e4m3");
                   std::string s = "f" + std::to_string(f.mantissa_bits) + "e" + std::to_string(f.exponent_bits);
                   if (f.bias != (1 << (f.exponent_bits - 1)) - 1) s += "b" + std::to_string(f.bias);
                   if (!f.has_sign) s += "u";
                   return s;
                 }},
      fmt);
}

unsigned beta(std::uint64_t cardinality) {
  if (cardinality == 0) throw DomainError("beta: cardinality must be positive");
  if (cardinality == 1) return 0;
  return 64u - static_cast<unsigned>(__builtin_clzll(cardinality - 1));
}

FixedFormat calibrate_fixed(double max_abs, unsigned bits, bool is_signed) {
  if (!std::isfinite(max_abs) || max_abs < 0) throw DomainError("calibration range must be finite");
  const int magnitude_bits = static_cast<int>(is_signed ? bits - 1 : bits);
  int ceil_log2 = 0;
  if (max_abs > 0) {
    int e = 0;
    const double m = std::frexp(max_abs, &e);
    ceil_log2 = m == 0.5 ? e - 1 : e;
  }
  FixedFormat f{bits, is_signed, ceil_log2 - magnitude_bits};
  validate(f);
  return f;
}

Code round_exact(Wide mantissa, int exponent, const Format& fmt) {
  return std::visit(overloaded{[&](const FixedFormat& f) { return round_fixed(mantissa, exponent, f); },
                               [&](const FloatFormat& f) { return round_float(mantissa, exponent, f); }},
                    fmt);
}

Code quantize(double value, const Format& fmt) {
  if (std::isnan(value)) throw DomainError("cannot quantize NaN");
  if (std::isinf(value)) {
    return std::visit(overloaded{[&](const FixedFormat& f) {
                                   return f.encode_integer(value < 0 ? f.min_integer() : f.max_integer());
                                 },
                                 [&](const FloatFormat& f) {
                                   if (value < 0 && !f.has_sign) return Code{0};
                                   const Code sign = value < 0 ? Code{1} << (f.fraction_bits() + f.exponent_bits) : 0;
                                   return sign | max_finite(f);
                                 }},
                      fmt);
  }
  if (value == 0) return 0;
  std::int64_t m = 0;
  int e = 0;
  decompose(value, m, e);
  return round_exact(m, e, fmt);
}

Code quantize_stochastic(double value, const Format& fmt, double r) {
  const Code nearest = quantize(value, fmt);
  const double v = dequantize(nearest, fmt);
  Code lower = nearest;
  Code upper = nearest;
  if (v > value) {
    lower = step_code(nearest, fmt, -1);
  } else if (v < value) {
    upper = step_code(nearest, fmt, +1);
  } else {
    return nearest;
  }
  const double lo = dequantize(lower, fmt);
  const double hi = dequantize(upper, fmt);
  if (!(value > lo) || !(value < hi)) return nearest;  // saturated
  return r <= 1.0 + (lo - value) / (hi - lo) ? lower : upper;
}

double dequantize(Code code, const Format& fmt) {
  return std::visit(
      overloaded{[&](const FixedFormat& f) { return std::ldexp(static_cast<double>(f.integer(code)), f.scale); },
                 [&](const FloatFormat& f) {
                   const unsigned e = float_exponent_field(code, f);
                   const double sign = float_sign(code, f) != 0 ? -1.0 : 1.0;
                   if (e == (1u << f.exponent_bits) - 1) {
                     const Code frac = code & ((Code{1} << f.fraction_bits()) - 1);
                     return frac == 0 ? sign * std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::quiet_NaN();
                   }
                   return sign * std::ldexp(static_cast<double>(float_mantissa(code, f)), f.quantum_exponent(e));
                 }},
      fmt);
}

Wide exact_value(Code code, const Format& fmt, int quantum_exp) {
  return std::visit(overloaded{[&](const FixedFormat& f) {
                                 return static_cast<Wide>(f.integer(code)) << (f.scale - quantum_exp);
                               },
                               [&](const FloatFormat& f) {
                                 const unsigned e = float_exponent_field(code, f);
                                 const Wide m = static_cast<Wide>(float_mantissa(code, f))
                                                << (f.quantum_exponent(e) - quantum_exp);
                                 return float_sign(code, f) != 0 ? -m : m;
                               }},
                    fmt);
}

bool is_finite(Code code, const Format& fmt) {
  if (const auto* f = std::get_if<FloatFormat>(&fmt))
    return float_exponent_field(code, *f) != (1u << f->exponent_bits) - 1;
  return true;
}

bool is_negative(Code code, const Format& fmt) {
  return std::visit(overloaded{[&](const FixedFormat& f) { return f.integer(code) < 0; },
                               [&](const FloatFormat& f) {
                                 return float_sign(code, f) != 0 && float_key(code, f) != 0;
                               }},
                    fmt);
}

bool code_less(Code a, Code b, const Format& fmt) {
  return std::visit(overloaded{[&](const FixedFormat& f) { return f.integer(a) < f.integer(b); },
                               [&](const FloatFormat& f) { return float_key(a, f) < float_key(b, f); }},
                    fmt);
}

Code relu(Code code, const Format& fmt) {
  return std::visit(overloaded{[&](const FixedFormat& f) { return f.integer(code) < 0 ? Code{0} : code; },
                               [&](const FloatFormat& f) { return float_sign(code, f) != 0 ? Code{0} : code; }},
                    fmt);
}

std::size_t element_count(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

QuantizedTensor QuantizedTensor::quantize(std::vector<std::size_t> shape, std::span<const double> values,
                                          const Format& f) {
  if (element_count(shape) != values.size()) throw DomainError("value count does not match shape");
  QuantizedTensor t{std::move(shape), f, {}};
  t.codes.reserve(values.size());
  for (const double v : values) t.codes.push_back(lutnet::quantize(v, f));
  return t;
}

std::vector<double> QuantizedTensor::values() const {
  std::vector<double> out;
  out.reserve(codes.size());
  for (const Code c : codes) out.push_back(dequantize(c, format));
  return out;
}

unsigned plane_count(const Format& fmt) {
  return std::visit(overloaded{[](const FixedFormat& f) { return f.bits; },
                               [](const FloatFormat& f) { return f.mantissa_bits; }},
                    fmt);
}

std::vector<std::uint8_t> bitplane(const QuantizedTensor& t, unsigned j) {
  if (j >= plane_count(t.format))
    throw IndexError("bitplane " + std::to_string(j) + " out of range for " + to_string(t.format));
  std::vector<std::uint8_t> plane;
  plane.reserve(t.codes.size());
  if (const auto* f = std::get_if<FloatFormat>(&t.format)) {
    for (const Code c : t.codes) plane.push_back(static_cast<std::uint8_t>((float_mantissa(c, *f) >> j) & 1u));
  } else {
    for (const Code c : t.codes) plane.push_back(static_cast<std::uint8_t>((c >> j) & 1u));
  }
  return plane;
}

SignedSplit split_signed(Code code, unsigned bits) {
  const Code low_mask = (Code{1} << (bits - 1)) - 1;
  return {code & low_mask, (code >> (bits - 1)) & 1u};
}

unsigned float_sign(Code code, const FloatFormat& f) {
  return f.has_sign ? (code >> (f.fraction_bits() + f.exponent_bits)) & 1u : 0u;
}

unsigned float_exponent_field(Code code, const FloatFormat& f) {
  return (code >> f.fraction_bits()) & ((1u << f.exponent_bits) - 1);
}

std::uint32_t float_mantissa(Code code, const FloatFormat& f) {
  const Code frac = code & ((Code{1} << f.fraction_bits()) - 1);
  return float_exponent_field(code, f) != 0 ? frac | (Code{1} << f.fraction_bits()) : frac;
}

FloatFields float_fields(Code code, const FloatFormat& f) {
  FloatFields out;
  out.sign = float_sign(code, f);
  out.exponent = float_exponent_field(code, f);
  const std::uint32_t m = float_mantissa(code, f);
  out.mantissa_planes.resize(f.mantissa_bits);
  for (unsigned j = 0; j < f.mantissa_bits; ++j) out.mantissa_planes[j] = static_cast<std::uint8_t>((m >> j) & 1u);
  return out;
}

Code assemble_float(const FloatFields& fields, const FloatFormat& f) {
  Code frac = 0;
  for (unsigned j = 0; j + 1 < f.mantissa_bits && j < fields.mantissa_planes.size(); ++j)
    frac |= Code{fields.mantissa_planes[j]} << j;
  Code c = (Code{fields.exponent} << f.fraction_bits()) | frac;
  if (f.has_sign) c |= Code{fields.sign} << (f.fraction_bits() + f.exponent_bits);
  return c;
}

int weight_grid_exponent(std::span<const float> weights) {
  int finest = std::numeric_limits<int>::max();
  int top = std::numeric_limits<int>::min();
  for (const float w : weights) {
    if (w == 0.0f) continue;
    if (!std::isfinite(w)) throw DomainError("non-finite weight");
    int e = 0;
    std::frexp(static_cast<double>(w), &e);
    const int ulp = std::abs(w) >= std::numeric_limits<float>::min() ? e - 24 : -149;
    finest = std::min(finest, ulp);
    top = std::max(top, e - 1);
  }
  if (top == std::numeric_limits<int>::min()) return 0;
  return std::max(finest, top - kWeightGridSpan);
}

Wide snap_to_grid(double value, int exponent) {
  if (!std::isfinite(value)) throw DomainError("cannot snap a non-finite value");
  if (value == 0) return 0;
  std::int64_t m = 0;
  int e = 0;
  decompose(value, m, e);
  const int shift = e - exponent;
  if (shift > 0 && bit_length(wide_abs(m)) + static_cast<unsigned>(shift) > 126)
    throw DomainError("value too large for its dyadic grid");
  return shift_round_even(m, shift);
}

DyadicWeights snap_weights(std::span<const float> weights, int exponent) {
  DyadicWeights out;
  out.exponent = exponent;
  out.values.reserve(weights.size());
  for (const float w : weights) {
    const Wide v = snap_to_grid(static_cast<double>(w), exponent);
    if (bit_length(wide_abs(v)) > 63) throw DomainError("weight does not fit its grid");
    out.values.push_back(static_cast<std::int64_t>(v));
  }
  return out;
}

std::string to_string(Wide v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  UWide a = wide_abs(v);
  std::string s;
  while (a != 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(a % 10)));
    a /= 10;
  }
  if (neg) s.push_back('-');
  return {s.rbegin(), s.rend()};
}

std::string to_string(UWide v) {
  if (v == 0) return "0";
  std::string s;
  while (v != 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return {s.rbegin(), s.rend()};
}

Wide parse_wide(const std::string& text) {
  std::size_t i = 0;
  bool neg = false;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) neg = text[i++] == '-';
  if (i == text.size()) throw DomainError("empty integer");
  UWide a = 0;
  for (; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') throw DomainError("bad integer '" + text + "'");
    a = a * 10 + static_cast<unsigned>(text[i] - '0');
  }
  return neg ? -static_cast<Wide>(a) : static_cast<Wide>(a);
}

}  // namespace lutnet
