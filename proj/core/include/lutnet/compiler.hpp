#pragma once

// Compiles trained layers into look-up tables plus an accumulation schedule
// that evaluates Wx + b (and 2-D convolutions) with lookups, shifts and adds.
//
// Affine tables hold exact chunk sums W_chunk * x_chunk as signed integers on
// the layer's accumulator grid 2^acc_exponent; the only rounding happens at
// layer exit, into the output format.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lutnet/formats.hpp"
#include "lutnet/lut.hpp"
#include "lutnet/model.hpp"
#include "lutnet/rounding.hpp"

namespace lutnet {

/// whole_word: each element's full code word indexes the table.
/// bitplane: one bit per element (plus the exponent field for floats).
/// bitplane_group: `group` adjacent planes per element.
enum class BitMode : std::uint8_t { whole_word, bitplane, bitplane_group };

std::string to_string(BitMode m);
BitMode parse_bit_mode(const std::string& s);

enum class BiasMode : std::uint8_t { accumulator, per_table };

std::string to_string(BiasMode m);
BiasMode parse_bias_mode(const std::string& s);

struct PartitionConfig {
  std::vector<std::vector<std::uint32_t>> chunks;  ///< element indices, disjoint, covering 0..q-1
  BitMode bit_mode = BitMode::bitplane;
  unsigned group = 1;
  Format input_format = FixedFormat{};
  /// Inputs are known to be >= 0: float tables omit the sign bit.
  bool nonnegative_input = false;

  /// Contiguous chunks of `chunk_size` elements (the last one may be shorter).
  static PartitionConfig uniform(std::size_t q, std::size_t chunk_size, BitMode mode, Format input_format,
                                 unsigned group = 1);
  std::vector<std::size_t> chunk_sizes() const;
  /// Throws CompileError unless the chunks partition {0..q-1} and the plane
  /// grouping is legal; returns advisory warnings.
  std::vector<std::string> validate(std::size_t q) const;

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

/// What one element contributes to a table index in one pass.
struct PassSpec {
  enum class Field : std::uint8_t { planes, msb, whole_code };
  Field field = Field::planes;
  unsigned low = 0;    ///< first plane of the group
  unsigned width = 1;  ///< planes in the group
  unsigned shift = 0;  ///< left shift applied to the pass result
  bool subtract = false;

  friend bool operator==(const PassSpec&, const PassSpec&) = default;
};

struct IndexLayout {
  Format input_format = FixedFormat{};
  unsigned element_bits = 1;  ///< index bits per element
  unsigned value_bits = 1;    ///< plane bits per element (0 for whole-code fields)
  bool sign_in_index = false;

  friend bool operator==(const IndexLayout&, const IndexLayout&) = default;
};

IndexLayout make_layout(const Format& input, BitMode mode, unsigned group, bool nonnegative);
/// Unsigned-magnitude passes; signed fixed-point layouts get their MSB pass from compile_signed.
std::vector<PassSpec> magnitude_passes(const IndexLayout& layout, BitMode mode);

/// Index field of one element code in one pass. Throws RunError for a
/// negative float routed into a sign-less table.
std::uint32_t element_field(Code code, const IndexLayout& layout, const PassSpec& pass);
/// Exact value of an index field on the grid 2^quantum_exponent(input_format),
/// before the pass shift.
Wide field_value(std::uint32_t field, const IndexLayout& layout, const PassSpec::Field kind);

enum class StepOp : std::uint8_t {
  lookup_load,  ///< register = T[index]
  lookup_add,   ///< register += T[index]
  combine,      ///< accumulator +=/-= register << shift
};

struct Step {
  StepOp op = StepOp::lookup_load;
  std::uint16_t pass = 0;
  std::uint32_t table = 0;  ///< logical table id
  std::uint32_t chunk = 0;

  friend bool operator==(const Step&, const Step&) = default;
};

enum class LayerKind : std::uint8_t { dense, conv2d, activation, pool, argmax, round };

std::string to_string(LayerKind k);

struct DenseBody {
  std::size_t p = 0;
  std::size_t q = 0;
  std::vector<std::vector<std::uint32_t>> chunks;
  IndexLayout layout;
  std::vector<PassSpec> passes;
  std::vector<Wide> bias;  ///< accumulator initial value, units of 2^acc_exponent
  int acc_exponent = 0;
  int weight_exponent = 0;
  BiasMode bias_mode = BiasMode::accumulator;

  friend bool operator==(const DenseBody&, const DenseBody&) = default;
};

/// Block convolution: one table per input channel, indexed by an m x m
/// block, entry = the (m+2r) x (m+2r) x C_out halo of that block.
/// Chunk id = channel * blocks + block, blocks in row-major order.
struct ConvBody {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t radius = 0;
  std::size_t block = 1;
  std::size_t blocks_y = 0;
  std::size_t blocks_x = 0;
  IndexLayout layout;
  std::vector<PassSpec> passes;
  std::vector<Wide> bias;  ///< per output channel
  int acc_exponent = 0;
  int weight_exponent = 0;

  std::size_t halo() const { return block + 2 * radius; }
  std::size_t block_count() const { return blocks_y * blocks_x; }

  friend bool operator==(const ConvBody&, const ConvBody&) = default;
};

enum class ActivationKind : std::uint8_t { relu, table };

struct ActivationBody {
  ActivationKind kind = ActivationKind::relu;
  std::string function = "relu";  ///< relu | sigmoid | tanh | identity

  friend bool operator==(const ActivationBody&, const ActivationBody&) = default;
};

struct PoolBody {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t window = 2;

  friend bool operator==(const PoolBody&, const PoolBody&) = default;
};

struct ArgmaxBody {
  friend bool operator==(const ArgmaxBody&, const ArgmaxBody&) = default;
};

struct RoundBody {
  RoundingTable table;

  friend bool operator==(const RoundBody&, const RoundBody&) = default;
};

struct LayerPlan {
  LayerKind kind = LayerKind::dense;
  std::string name;
  Format input_format = FixedFormat{};
  Format output_format = FixedFormat{};
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> output_shape;
  LutBank bank;
  std::vector<Step> schedule;
  std::variant<DenseBody, ConvBody, ActivationBody, PoolBody, ArgmaxBody, RoundBody> body;
  bool cost_only = false;
  std::vector<std::string> warnings;

  /// Table bits if every entry element held `element_bits` bits (the
  /// nominal r_O accounting; defaults to the output format width).
  UWide nominal_size_bits(std::optional<unsigned> element_bits = std::nullopt) const;

  friend bool operator==(const LayerPlan&, const LayerPlan&) = default;
};

struct NetworkPlan {
  std::string name;
  Format input_format = FixedFormat{};
  std::vector<std::size_t> input_shape;
  std::vector<LayerPlan> layers;

  bool cost_only() const;
  UWide size_bits() const;
  UWide nominal_size_bits() const;

  friend bool operator==(const NetworkPlan&, const NetworkPlan&) = default;
};

struct CompileOptions {
  BiasMode bias = BiasMode::accumulator;
  bool cost_only = false;
  unsigned index_cap = kDefaultIndexCap;
  std::uint64_t memory_cap_bytes = std::uint64_t{2} << 30;
};

struct DenseWeights {
  std::size_t p = 0;
  std::size_t q = 0;
  std::vector<float> weights;  ///< row-major p x q
  std::vector<float> bias;     ///< p
};

struct ConvWeights {
  std::size_t radius = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<float> kernel;  ///< [ky][kx][ci][co], (2r+1)^2 * C_in * C_out
  std::vector<float> bias;    ///< C_out
};

struct ConvConfig {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t block = 1;
  BitMode bit_mode = BitMode::bitplane;
  unsigned group = 1;
  Format input_format = FixedFormat{};
  bool nonnegative_input = false;
};

LayerPlan compile_dense(const DenseWeights& weights, const PartitionConfig& cfg, const Format& output_format,
                        const CompileOptions& options = {});

LayerPlan compile_conv2d(const ConvWeights& weights, const ConvConfig& cfg, const Format& output_format,
                         const CompileOptions& options = {});

/// Adds the MSB pass of an n-bit two's-complement input: the sign bits are
/// routed through the same tables, shifted left by n-1 and subtracted.
LayerPlan compile_signed(LayerPlan plan, unsigned n);

/// relu compiles to a compare-select step; any other function is tabulated
/// per element over every code of `input` (entries quantized to `output`).
LayerPlan compile_activation(ActivationKind kind, const std::string& function, const Format& input,
                             const Format& output, std::vector<std::size_t> shape,
                             const CompileOptions& options = {});

LayerPlan compile_pool(std::vector<std::size_t> input_shape, std::size_t window, const Format& format);
LayerPlan compile_argmax(std::vector<std::size_t> input_shape, const Format& format);
LayerPlan compile_round(const RoundingTable& table, std::vector<std::size_t> shape);

std::function<double(double)> activation_function(const std::string& name);

/// Per-affine-layer compile settings of a network.
struct LayerConfig {
  std::optional<std::size_t> chunk_size;            ///< uniform chunks (default 1)
  std::vector<std::vector<std::uint32_t>> chunks;   ///< explicit chunks, overrides chunk_size
  BitMode bit_mode = BitMode::bitplane;
  unsigned group = 1;
  std::optional<Format> input_format;
  Format output_format = FloatFormat::binary16();
  BiasMode bias = BiasMode::accumulator;
  bool cost_only = false;
  std::size_t block = 1;                     ///< conv block size m
  std::optional<bool> nonnegative_input;     ///< auto-detected when unset
  std::size_t rounding_length = 0;           ///< >0: stochastic requantization with R entries
  std::uint64_t rounding_seed = kDefaultRounderSeed;

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

struct NetworkConfig {
  std::optional<Format> input_format;
  std::vector<LayerConfig> layers;   ///< one per dense/conv record, or empty
  std::optional<LayerConfig> defaults;  ///< used for every affine layer when `layers` is empty
  bool cost_only = false;
  unsigned index_cap = kDefaultIndexCap;
  std::uint64_t memory_cap_bytes = std::uint64_t{2} << 30;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// JSON key/value tree; see README for the schema.
NetworkConfig parse_network_config(const std::string& json_text);
std::string to_json(const NetworkConfig& cfg);

NetworkPlan compile_network(const WeightContainer& weights, const NetworkConfig& cfg);

/// Resolved input format of the network: config, then container metadata.
Format network_input_format(const WeightContainer& weights, const NetworkConfig& cfg);

}  // namespace lutnet
