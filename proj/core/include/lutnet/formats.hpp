#pragma once

// Parametric fixed- and floating-point scalar encodings, quantization and
// bit-field extraction (bitplanes, exponent fields, sign bits).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lutnet/wide.hpp"

namespace lutnet {

/// Raw code word of a format, right-aligned.
using Code = std::uint32_t;

inline constexpr unsigned kMaxFormatBits = 32;

/// value = integer * 2^scale. Signed formats are two's complement.
struct FixedFormat {
  unsigned bits = 8;
  bool is_signed = false;
  int scale = 0;

  std::int64_t min_integer() const { return is_signed ? -(std::int64_t{1} << (bits - 1)) : 0; }
  std::int64_t max_integer() const {
    return is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
  }
  /// Integer value of a code word (sign-extended for signed formats).
  std::int64_t integer(Code code) const;
  Code encode_integer(std::int64_t v) const;

  friend bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

/// IEEE-754-style binary float: sign (optional), `exponent_bits` biased
/// exponent, `mantissa_bits - 1` stored fraction bits. The all-ones exponent
/// field is reserved (Inf/NaN) and never produced by quantization.
struct FloatFormat {
  unsigned mantissa_bits = 11;  ///< precision n, including the implicit leading bit
  unsigned exponent_bits = 5;   ///< t
  bool has_sign = true;
  int bias = 15;

  static FloatFormat binary16() { return {11, 5, true, 15}; }
  static FloatFormat e4m3() { return {4, 4, true, 7}; }

  unsigned fraction_bits() const { return mantissa_bits - 1; }
  unsigned width() const { return fraction_bits() + exponent_bits + (has_sign ? 1u : 0u); }
  unsigned max_exponent_field() const { return (1u << exponent_bits) - 2; }
  /// Exponent of the quantum (weight of the mantissa LSB) for a given exponent field.
  int quantum_exponent(unsigned exponent_field) const {
    const int e = exponent_field == 0 ? 1 : static_cast<int>(exponent_field);
    return e - bias - static_cast<int>(fraction_bits());
  }
  int min_quantum_exponent() const { return quantum_exponent(0); }

  friend bool operator==(const FloatFormat&, const FloatFormat&) = default;
};

using Format = std::variant<FixedFormat, FloatFormat>;

inline bool is_fixed(const Format& f) { return std::holds_alternative<FixedFormat>(f); }
inline bool is_float(const Format& f) { return std::holds_alternative<FloatFormat>(f); }

/// Throws DomainError when the format parameters are out of range.
void validate(const Format& f);
unsigned width(const Format& f);
/// Exponent of the finest grid step of the format.
int quantum_exponent(const Format& f);
/// True when the format can encode negative values.
bool is_signed(const Format& f);

/// Names: "u3", "s8", "u3@-3" (scale after '@'), "binary16", "e4m3",
/// "f<n>e<t>" with optional "u" suffix for an unsigned float.
Format parse_format(std::string_view text);
std::string to_string(const Format& f);

/// ceil(log2(cardinality)).
unsigned beta(std::uint64_t cardinality);

/// Power-of-two scale such that max_abs maps onto the top code.
FixedFormat calibrate_fixed(double max_abs, unsigned bits, bool is_signed);

/// Round-to-nearest-even, saturating at the format extremes.
Code quantize(double value, const Format& f);
/// Stochastic rounding with a caller-supplied uniform sample r in [0,1):
/// returns the lower neighbour iff r <= 1 + (lower - value) / step.
Code quantize_stochastic(double value, const Format& f, double r);
double dequantize(Code code, const Format& f);

/// Round the exact dyadic value mantissa * 2^exponent into the format
/// (nearest-even, saturating). This is the single rounding point of a layer.
Code round_exact(Wide mantissa, int exponent, const Format& f);

/// The code's value as an integer multiple of 2^quantum_exp.
/// Requires quantum_exp <= quantum_exponent(f).
Wide exact_value(Code code, const Format& f, int quantum_exp);

bool is_finite(Code code, const Format& f);
bool is_negative(Code code, const Format& f);
/// Total order on finite codes matching the order of their values.
bool code_less(Code a, Code b, const Format& f);
/// max(x, 0) realized as a sign test and select.
Code relu(Code code, const Format& f);

struct QuantizedTensor {
  std::vector<std::size_t> shape;
  Format format = FixedFormat{};
  std::vector<Code> codes;  ///< row-major

  std::size_t size() const { return codes.size(); }
  static QuantizedTensor quantize(std::vector<std::size_t> shape, std::span<const double> values,
                                  const Format& f);
  std::vector<double> values() const;
};

std::size_t element_count(std::span<const std::size_t> shape);

/// Number of bitplanes of a format: `bits` for fixed, `mantissa_bits` for float.
unsigned plane_count(const Format& f);

/// Bit j of every element (mantissa bit j, implicit bit included, for floats).
std::vector<std::uint8_t> bitplane(const QuantizedTensor& t, unsigned j);

struct SignedSplit {
  Code low_bits;  ///< x_b: the code without its MSB
  unsigned msb;
};
/// value(code) = low_bits - msb * 2^(bits-1).
SignedSplit split_signed(Code code, unsigned bits);

struct FloatFields {
  unsigned sign = 0;
  unsigned exponent = 0;
  /// Mantissa planes, LSB first; planes[n-1] is the materialized implicit bit
  /// (0 for subnormals and zero).
  std::vector<std::uint8_t> mantissa_planes;
};
FloatFields float_fields(Code code, const FloatFormat& f);
Code assemble_float(const FloatFields& fields, const FloatFormat& f);
/// Integer mantissa with the implicit bit materialized.
std::uint32_t float_mantissa(Code code, const FloatFormat& f);
unsigned float_exponent_field(Code code, const FloatFormat& f);
unsigned float_sign(Code code, const FloatFormat& f);

/// Weights as signed integers on a common dyadic grid: w = values[i] * 2^exponent.
struct DyadicWeights {
  std::vector<std::int64_t> values;
  int exponent = 0;
};

/// Maximum spread between the largest weight's leading bit and the grid.
inline constexpr int kWeightGridSpan = 62;

/// Grid exponent for a weight set: the finest float32 ulp present, raised
/// so that the largest weight needs at most kWeightGridSpan bits.
int weight_grid_exponent(std::span<const float> weights);
DyadicWeights snap_weights(std::span<const float> weights, int exponent);
/// Nearest-even multiple of 2^exponent, as an integer.
Wide snap_to_grid(double value, int exponent);

}  // namespace lutnet
