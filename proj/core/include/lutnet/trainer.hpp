#pragma once

// Minibatch SGD for a single dense softmax classifier on quantized pixels.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lutnet/formats.hpp"
#include "lutnet/model.hpp"

namespace lutnet {

struct TrainConfig {
  std::size_t episodes = 50000;
  std::size_t minibatch = 100;
  double learning_rate = 0.05;
  std::size_t decay_after = 10000;  ///< lr * sqrt(decay_after / t) beyond this episode
  unsigned bits = 3;                ///< input quantizer width
  std::uint64_t seed = 1;
  std::size_t loss_window = 1000;   ///< episodes per reported mean loss

  /// Throws DomainError on zero counts or a width outside 1..16.
  void validate() const;
  double rate(std::size_t episode) const;  ///< episode is 1-based
};

/// Unsigned `bits`-wide grid over [0, 1): u<bits>@-<bits>.
FixedFormat training_input_format(unsigned bits);

/// Row-major classes x inputs weights plus per-class bias.
struct LinearModel {
  std::size_t inputs = 0;
  std::size_t classes = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  LinearModel() = default;
  LinearModel(std::size_t inputs, std::size_t classes);
};

/// Mean softmax cross-entropy over `labels.size()` rows of `x` (each
/// `model.inputs` wide). When `grad` is non-null it receives d(loss)/d(params).
double softmax_loss(const LinearModel& model, std::span<const double> x, std::span<const std::uint8_t> labels,
                    LinearModel* grad = nullptr);

struct TrainResult {
  WeightContainer weights;            ///< dense classes x pixels, then argmax
  std::vector<double> window_losses;  ///< mean minibatch loss per loss_window episodes
};

/// Deterministic for a given seed. Throws TrainingError when the loss turns non-finite.
TrainResult train_linear(const IdxDataset& data, const TrainConfig& cfg);

}  // namespace lutnet
