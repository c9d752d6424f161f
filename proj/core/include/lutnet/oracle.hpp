#pragma once

// Reference evaluator: direct multiply-accumulate on the trained weights,
// with the same quantization points and single layer-exit rounding as a
// compiled plan. Shares no table or schedule code with the engine.

#include <cstdint>
#include <string>
#include <vector>

#include "lutnet/compiler.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/formats.hpp"
#include "lutnet/model.hpp"

namespace lutnet {

/// One quantization point of the reference evaluation.
struct QuantPoint {
  enum class Op : std::uint8_t { affine, relu, function, requantize, stochastic_round, pool, argmax };
  Op op = Op::affine;
  std::size_t record = 0;  ///< index into WeightContainer::layers (affine, pool, argmax)
  Format input_format = FixedFormat{};
  Format output_format = FixedFormat{};
  std::string function;               ///< for Op::function
  std::vector<double> sequence;       ///< for Op::stochastic_round
  std::vector<std::size_t> input_shape;

  friend bool operator==(const QuantPoint&, const QuantPoint&) = default;
};

struct QuantSpec {
  Format input_format = FixedFormat{};
  std::vector<std::size_t> input_shape;
  std::vector<QuantPoint> points;

  /// Mirrors the formats and insertion points of a plan (cost-only plans work).
  static QuantSpec from_plan(const NetworkPlan& plan, const WeightContainer& weights);
  /// Compiles `cfg` cost-only and mirrors the result.
  static QuantSpec from_config(const WeightContainer& weights, const NetworkConfig& cfg);

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

/// Throws RunError on a shape/format mismatch.
QuantizedTensor evaluate(const WeightContainer& weights, const QuantSpec& spec, const QuantizedTensor& input,
                         std::uint64_t seed = 0);

/// Oracle predictions over a labeled dataset. `limit` = 0 means all.
Evaluation evaluate_dataset(const WeightContainer& weights, const QuantSpec& spec, const IdxDataset& data,
                            std::size_t limit = 0, std::uint64_t seed = 0);

/// Fraction of argmax-correct predictions; throws RunError on an empty dataset.
double accuracy(const WeightContainer& weights, const QuantSpec& spec, const IdxDataset& data);

}  // namespace lutnet
