#pragma once

// Stochastic rounding realized as a table indexed by (counter, input code).
//
// f(x, i) = floor(x)       if r(i) <= 1 + (floor(x) - x) / eps
//           floor(x) + eps otherwise
//
// where floor is taken on the output grid (step eps) and r is a fixed
// sequence of R numbers in [0, 1). The counter advances by one, modulo R,
// on every access.

#include <cstdint>
#include <vector>

#include "lutnet/formats.hpp"
#include "lutnet/lut.hpp"

namespace lutnet {

inline constexpr std::size_t kDefaultRounderLength = 64;
inline constexpr std::uint64_t kDefaultRounderSeed = 0x5eed'1234'abcd'0001ull;

/// R pseudo-random numbers in [0, 1) from a seeded xorshift64* generator.
std::vector<double> xorshift_sequence(std::size_t length, std::uint64_t seed);
/// R evenly spread values in bit-reversed (van der Corput) order: a 1-D dither.
std::vector<double> dither_sequence(std::size_t length);

/// Immutable (x, i)-indexed rounding table between two fixed-point grids.
class RoundingTable {
 public:
  RoundingTable() = default;
  /// `sequence.size()` must be a power of two; output.scale >= input.scale.
  RoundingTable(FixedFormat input, FixedFormat output, std::vector<double> sequence);

  const FixedFormat& input() const { return input_; }
  const FixedFormat& output() const { return output_; }
  const std::vector<double>& sequence() const { return sequence_; }
  std::size_t length() const { return sequence_.size(); }
  const Lut& table() const { return table_; }
  UWide size_bits() const { return table_.size_bits(); }
  /// True when f(x, i) hit the top of the output range (lower + eps not representable).
  bool saturates(Code x) const;

  friend bool operator==(const RoundingTable&, const RoundingTable&) = default;

 private:
  FixedFormat input_;
  FixedFormat output_;
  std::vector<double> sequence_;
  Lut table_;
};

/// Per-worker counter state over a shared RoundingTable. Not thread-safe;
/// give each worker its own instance and reset it per sample when runs must
/// match across workers.
class StochasticRounder {
 public:
  explicit StochasticRounder(const RoundingTable& table, std::uint64_t start = 0)
      : table_(&table), counter_(start & (table.length() - 1)) {}

  Code round(Code x);
  std::uint64_t counter() const { return counter_; }
  void reset(std::uint64_t start = 0) { counter_ = start & (table_->length() - 1); }
  std::uint64_t saturations() const { return saturations_; }
  const RoundingTable& table() const { return *table_; }

 private:
  const RoundingTable* table_;
  std::uint64_t counter_;
  std::uint64_t saturations_ = 0;
};

Code stochastic_round(Code x, StochasticRounder& unit);

}  // namespace lutnet
