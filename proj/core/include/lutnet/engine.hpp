#pragma once

// Executes compiled plans with lookups, shifts, adds/subtracts and
// compare-selects only.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lutnet/compiler.hpp"
#include "lutnet/formats.hpp"
#include "lutnet/model.hpp"
#include "lutnet/rounding.hpp"

namespace lutnet {

/// Operations executed (or scheduled) for one inference.
///   shift_adds_c1: (k-1) vector additions per pass, times the vector length
///   shift_adds_c2: c1 plus the per-pass combine into the accumulator
struct OpTally {
  std::uint64_t lut_evals = 0;
  std::uint64_t shift_adds_c1 = 0;
  std::uint64_t shift_adds_c2 = 0;
  std::uint64_t compares = 0;
  std::uint64_t multiplies = 0;  ///< no engine path increments this

  OpTally& operator+=(const OpTally& o);
  friend bool operator==(const OpTally&, const OpTally&) = default;
};

/// The primitive operations a layer's execution is built from.
enum class MicroOp : std::uint8_t { lookup, shift, add, subtract, compare, select };

std::string to_string(MicroOp op);
std::set<MicroOp> step_vocabulary(const LayerPlan& layer);
std::set<MicroOp> step_vocabulary(const NetworkPlan& plan);

/// Inference state over a shared, immutable plan: one stochastic-rounding
/// counter per rounding layer. Not thread-safe; use one Engine per worker.
class Engine {
 public:
  explicit Engine(const NetworkPlan& plan, std::uint64_t seed = 0);

  /// Throws RunError on a shape/format mismatch, a non-finite input code,
  /// or a cost-only plan.
  QuantizedTensor run(const QuantizedTensor& input, OpTally* tally = nullptr);
  /// Rewinds every rounding counter to `seed` (mod R).
  void reset(std::uint64_t seed = 0);

  const NetworkPlan& plan() const { return *plan_; }

 private:
  const NetworkPlan* plan_;
  std::vector<StochasticRounder> rounders_;
  std::vector<std::size_t> rounder_of_layer_;
};

/// One inference with fresh rounding counters started at `seed`.
QuantizedTensor run(const NetworkPlan& plan, const QuantizedTensor& input, std::uint64_t seed = 0,
                    OpTally* tally = nullptr);

QuantizedTensor run_layer(const LayerPlan& layer, const QuantizedTensor& input, OpTally* tally = nullptr,
                          StochasticRounder* rounder = nullptr);

/// Ops measured by executing the plan on `input`.
OpTally count_runtime_ops(const NetworkPlan& plan, const QuantizedTensor& input);
/// Ops implied by the schedules alone; also works for cost-only plans.
OpTally scheduled_ops(const NetworkPlan& plan);
OpTally scheduled_ops(const LayerPlan& layer);

/// Index of the largest output (lowest index on ties), or the code of a
/// final argmax layer.
std::uint32_t predicted_class(const QuantizedTensor& output);

struct Evaluation {
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::size_t classes = 10;
  std::vector<std::uint32_t> predictions;
  std::vector<std::vector<std::size_t>> confusion;  ///< [label][prediction]

  double accuracy() const { return samples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples); }
};

/// Accuracy and confusion counts of `predictions` against the first labels of `data`.
Evaluation score_predictions(std::vector<std::uint32_t> predictions, const IdxDataset& data);

/// Runs every dataset image through the plan (one thread per hardware core,
/// rounding counters reset to `seed` per sample). `limit` = 0 means all.
Evaluation evaluate_plan(const NetworkPlan& plan, const IdxDataset& data, std::size_t limit = 0,
                         std::uint64_t seed = 0);

}  // namespace lutnet
