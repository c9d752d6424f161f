#pragma once

// Immutable look-up tables with bit-packed entries, banks of shared tables,
// and tabulation of functions over small index sets.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "lutnet/formats.hpp"
#include "lutnet/wide.hpp"

namespace lutnet {

/// Default cap on the index width of a materialized table.
inline constexpr unsigned kDefaultIndexCap = 26;

/// Geometry of a table. Entries are `entry_shape` elements of
/// `element_bits` each; signed elements are two's complement.
struct LutShape {
  unsigned index_bits = 0;
  unsigned element_bits = 0;
  std::vector<std::size_t> entry_shape;
  bool signed_elements = false;

  std::size_t entry_elements() const { return element_count(entry_shape); }
  std::uint64_t entry_bits() const { return std::uint64_t{element_bits} * entry_elements(); }
  /// 2^index_bits * entry_bits, saturating.
  UWide size_bits() const;

  friend bool operator==(const LutShape&, const LutShape&) = default;
};

class Lut {
 public:
  Lut() = default;
  /// Zero-filled table. Throws CapacityError when index_bits > index_cap.
  explicit Lut(LutShape shape, unsigned index_cap = kDefaultIndexCap);

  const LutShape& shape() const { return shape_; }
  unsigned index_bits() const { return shape_.index_bits; }
  std::uint64_t entries() const { return std::uint64_t{1} << shape_.index_bits; }
  UWide size_bits() const { return shape_.size_bits(); }

  /// Decoded entry (sign-extended when elements are signed).
  std::vector<Wide> lookup(std::uint64_t index) const;
  /// Unchecked decode into `out` (length entry_elements()).
  void read(std::uint64_t index, std::span<Wide> out) const;
  /// Unchecked: adds the entry element-wise into `acc`.
  void accumulate(std::uint64_t index, std::span<Wide> acc) const;
  /// Raw element word (no sign extension).
  std::uint64_t raw(std::uint64_t index, std::size_t element) const;

  void write(std::uint64_t index, std::span<const Wide> values);

  const std::vector<std::uint64_t>& words() const { return words_; }

  /// Binary image: "LUT1", index_bits, element_bits, signed flag, entry
  /// shape, then the packed entries (little-endian bit order).
  void save_image(std::ostream& os) const;
  static Lut load_image(std::istream& is);

  friend bool operator==(const Lut&, const Lut&) = default;

 private:
  Wide element(std::uint64_t bit_pos) const;

  LutShape shape_;
  std::vector<std::uint64_t> words_;
};

/// Tabulate an exact integer-valued function: fn(index, out) fills one entry.
Lut tabulate_exact(const std::function<void(std::uint64_t, std::span<Wide>)>& fn, unsigned index_bits,
                   std::vector<std::size_t> entry_shape, unsigned element_bits,
                   unsigned index_cap = kDefaultIndexCap);

/// Tabulate a real-valued function; each output element is evaluated in
/// full precision and then quantized to `out` (entries hold its code words).
Lut tabulate(const std::function<std::vector<double>(std::uint64_t)>& fn, unsigned index_bits,
             std::vector<std::size_t> entry_shape, const Format& out, unsigned index_cap = kDefaultIndexCap);

/// Physical tables plus a many-to-one map from logical table ids.
struct LutBank {
  std::vector<LutShape> shapes;     ///< one per physical table
  std::vector<Lut> tables;          ///< empty for cost-only banks
  std::vector<std::uint32_t> logical;  ///< logical id -> physical index

  bool materialized() const { return tables.size() == shapes.size(); }
  std::size_t physical_count() const { return shapes.size(); }
  std::size_t logical_count() const { return logical.size(); }
  const Lut& resolve(std::uint32_t logical_id) const;
  /// Bits of distinct physical tables, each counted once.
  UWide size_bits() const;

  friend bool operator==(const LutBank&, const LutBank&) = default;
};

/// Saturating size helpers and human-readable binary units (KiB, MiB, GiB).
UWide saturating_add(UWide a, UWide b);
UWide saturating_mul(UWide a, UWide b);
std::string format_bits(UWide bits);

}  // namespace lutnet
