#pragma once

// Analytic LUT-size and operation-count model. Works from layer geometry
// and formats alone, so it covers configurations far too large to build.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lutnet/compiler.hpp"
#include "lutnet/formats.hpp"
#include "lutnet/model.hpp"
#include "lutnet/wide.hpp"

namespace lutnet {

struct CostReport {
  UWide total_lut_bits = 0;
  std::uint64_t physical_table_count = 0;
  std::uint64_t logical_table_count = 0;
  std::uint64_t lut_evals = 0;
  std::uint64_t shift_adds_c1 = 0;  ///< (k-1) vector additions per pass
  std::uint64_t shift_adds_c2 = 0;  ///< k vector additions per pass
  std::uint64_t reference_macs = 0;
  std::uint64_t input_bits = 0;     ///< bits of the layer input vector
  unsigned max_index_bits = 0;
  bool materializable = true;       ///< every table index fits the cap

  CostReport& operator+=(const CostReport& o);
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// Index bits each element contributes per table, and passes per lookup set.
struct ElementIndexing {
  unsigned bits_per_element = 0;
  unsigned passes = 0;
};
ElementIndexing element_indexing(const Format& input, BitMode mode, unsigned group, bool nonnegative);

struct DenseCostConfig {
  std::vector<std::size_t> chunk_sizes;
  BitMode bit_mode = BitMode::bitplane;
  unsigned group = 1;
  bool nonnegative_input = false;
  unsigned index_cap = kDefaultIndexCap;
};

/// p x q dense layer; entries of r_O bits each.
CostReport cost_dense(std::size_t p, std::size_t q, const Format& input, unsigned r_O, const DenseCostConfig& cfg);

struct ConvCostConfig {
  std::size_t block = 1;
  BitMode bit_mode = BitMode::bitplane;
  unsigned group = 1;
  bool nonnegative_input = false;
  unsigned index_cap = kDefaultIndexCap;
};

CostReport cost_conv(std::size_t radius, std::size_t in_channels, std::size_t out_channels, std::size_t height,
                     std::size_t width, const Format& input, unsigned r_O, const ConvCostConfig& cfg);

/// R * 2^beta_in * beta_out bits.
UWide cost_stochastic_rounder(std::uint64_t R, unsigned beta_in, unsigned beta_out);

/// Layer geometry of an architecture, without weights.
struct ArchLayer {
  std::string name;
  RecordKind kind = RecordKind::dense;
  std::size_t p = 0, q = 0;                            ///< dense
  std::size_t radius = 0, in_channels = 0, out_channels = 0, height = 0, width = 0;  ///< conv2d
  std::size_t window = 2;                              ///< maxpool
  std::string activation = "none";
  Format input_format = FixedFormat{};
  bool nonnegative_input = false;
};

struct Architecture {
  std::string name;
  std::vector<ArchLayer> layers;
  unsigned output_bits = 16;  ///< r_O of the affine layers
};

/// "linear" (784x10, u3 inputs), "mlp" (784-1024-512-10, u8 then binary16),
/// "lenet" (two 5x5 conv + pool, 3136x1024, 1024x10, binary16).
Architecture builtin_architecture(const std::string& name);
/// Geometry of a container's records. Input formats come from `cfg` when
/// given (via a cost-only compile), else from the container tags.
Architecture architecture_from(const WeightContainer& weights, const NetworkConfig& cfg = {});

struct SweepGrid {
  std::vector<std::size_t> chunk_sizes = {1};
  std::vector<BitMode> bit_modes = {BitMode::bitplane};
  std::vector<std::size_t> blocks = {1};  ///< conv block sizes
  unsigned group = 1;
  unsigned index_cap = kDefaultIndexCap;
};

/// Grid for a built-in architecture name; anything else gets a generic grid.
SweepGrid default_grid(const std::string& arch_name);

struct LayerCost {
  std::string layer;
  std::string chunks;  ///< describe_chunks() for dense, "block<m>" for conv
  CostReport report;
};

struct SweepPoint {
  std::size_t config_id = 0;
  std::size_t chunk_size = 1;
  BitMode bit_mode = BitMode::bitplane;
  std::size_t block = 1;
  std::vector<LayerCost> layers;
  CostReport total;
  bool dominated = false;
};

/// Whole-network cost of one grid point.
SweepPoint cost_network(const Architecture& arch, std::size_t chunk_size, BitMode mode, std::size_t block,
                        unsigned group = 1, unsigned index_cap = kDefaultIndexCap);

/// One point per grid combination, sorted by total bits (ties by id), with
/// Pareto-dominated points (size vs. C1 shift-adds) flagged.
std::vector<SweepPoint> sweep(const Architecture& arch, const SweepGrid& grid);

/// Columns: config_id, layer, chunk_sizes, bit_mode, total_lut_bits,
/// lut_evals, shift_adds_c1, shift_adds_c2, reference_macs, materializable,
/// dominated, total_lut_size. One row per layer plus a "total" row.
std::string sweep_csv(const std::vector<SweepPoint>& points);

/// "56x14" for 56 chunks of 14; ragged tails are appended as "+1x10".
std::string describe_chunks(const std::vector<std::size_t>& sizes);

}  // namespace lutnet
