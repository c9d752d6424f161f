#include "lutnet/rounding.hpp"

#include <algorithm>

#include "lutnet/errors.hpp"

namespace lutnet {

std::vector<double> xorshift_sequence(std::size_t length, std::uint64_t seed) {
  // splitmix64 whitening of the seed, then xorshift64*.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  std::uint64_t state = (z ^ (z >> 31)) | 1;
  std::vector<double> out(length);
  for (auto& r : out) {
    state ^= state >> 12;
    state ^= state << 25;
    state ^= state >> 27;
    const std::uint64_t bits = state * 0x2545f4914f6cdd1dull;
    r = static_cast<double>(bits >> 11) * 0x1.0p-53;
  }
  return out;
}

std::vector<double> dither_sequence(std::size_t length) {
  unsigned log2 = 0;
  while ((std::size_t{1} << log2) < length) ++log2;
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    std::size_t rev = 0;
    for (unsigned b = 0; b < log2; ++b) rev |= ((i >> b) & 1u) << (log2 - 1 - b);
    out[i] = (static_cast<double>(rev) + 0.5) / static_cast<double>(length);
  }
  return out;
}

RoundingTable::RoundingTable(FixedFormat input, FixedFormat output, std::vector<double> sequence)
    : input_(input), output_(output), sequence_(std::move(sequence)) {
  validate(input_);
  validate(output_);
  const std::size_t r = sequence_.size();
  if (r == 0 || (r & (r - 1)) != 0) throw ContractError("rounding sequence length must be a power of two");
  if (output_.scale < input_.scale) throw ContractError("rounding output grid must be coarser than the input grid");
  for (const double v : sequence_)
    if (!(v >= 0.0 && v < 1.0)) throw DomainError("rounding sequence values must lie in [0, 1)");
  const unsigned counter_bits = beta(r);
  const unsigned shift = static_cast<unsigned>(output_.scale - input_.scale);
  table_ = Lut(LutShape{counter_bits + input_.bits, output_.bits, {1}, false}, 64);
  std::vector<Wide> entry(1);
  for (std::uint64_t i = 0; i < r; ++i) {
    for (std::uint64_t x = 0; x < (std::uint64_t{1} << input_.bits); ++x) {
      const std::int64_t value = input_.integer(static_cast<Code>(x));
      const std::int64_t lower = value >> shift;  // floor on the output grid
      const std::int64_t remainder = value - (lower << shift);
      const double frac = static_cast<double>(remainder) / static_cast<double>(std::int64_t{1} << shift);
      std::int64_t pick = sequence_[i] <= 1.0 - frac ? lower : lower + 1;
      pick = std::clamp(pick, output_.min_integer(), output_.max_integer());
      entry[0] = output_.encode_integer(pick);
      table_.write((i << input_.bits) | x, entry);
    }
  }
}

bool RoundingTable::saturates(Code x) const {
  const unsigned shift = static_cast<unsigned>(output_.scale - input_.scale);
  const std::int64_t value = input_.integer(x);
  const std::int64_t lower = value >> shift;
  const bool on_grid = value == (lower << shift);
  return (!on_grid && lower + 1 > output_.max_integer()) || lower > output_.max_integer() ||
         lower < output_.min_integer();
}

Code StochasticRounder::round(Code x) {
  const auto& t = *table_;
  const Code masked = x & static_cast<Code>((std::uint64_t{1} << t.input().bits) - 1);
  const Code out = static_cast<Code>(t.table().raw((counter_ << t.input().bits) | masked, 0));
  if (t.saturates(masked)) ++saturations_;
  counter_ = (counter_ + 1) & (t.length() - 1);
  return out;
}

Code stochastic_round(Code x, StochasticRounder& unit) { return unit.round(x); }

}  // namespace lutnet
