#include "lutnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lutnet/errors.hpp"

namespace lutnet {

void TrainConfig::validate() const {
  if (episodes == 0 || minibatch == 0 || loss_window == 0) throw DomainError("training counts must be positive");
  if (bits < 1 || bits > 16) throw DomainError("input bits must be in 1..16");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be positive");
}

double TrainConfig::rate(std::size_t episode) const {
  if (episode <= decay_after || decay_after == 0) return learning_rate;
  return learning_rate * std::sqrt(static_cast<double>(decay_after) / static_cast<double>(episode));
}

FixedFormat training_input_format(unsigned bits) { return calibrate_fixed(1.0, bits, false); }

LinearModel::LinearModel(std::size_t in, std::size_t cls)
    : inputs(in), classes(cls), weights(in * cls, 0.0), bias(cls, 0.0) {}

double softmax_loss(const LinearModel& m, std::span<const double> x, std::span<const std::uint8_t> labels,
                    LinearModel* grad) {
  const std::size_t n = labels.size(), q = m.inputs, k = m.classes;
  if (x.size() != n * q) throw DomainError("feature matrix does not match the label count");
  if (grad != nullptr) *grad = LinearModel(q, k);
  std::vector<double> z(k);
  double total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x.data() + s * q;
    if (labels[s] >= k) throw DomainError("label out of range");
    for (std::size_t c = 0; c < k; ++c) {
      const double* w = m.weights.data() + c * q;
      double acc = m.bias[c];
      for (std::size_t i = 0; i < q; ++i) acc += w[i] * xs[i];
      z[c] = acc;
    }
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (auto& v : z) sum += (v = std::exp(v - top));
    total += std::log(sum) - std::log(z[labels[s]]);
    if (grad == nullptr) continue;
    for (std::size_t c = 0; c < k; ++c) {
      // softmax - onehot, averaged over the batch
      const double d = (z[c] / sum - (c == labels[s] ? 1.0 : 0.0)) / static_cast<double>(n);
      grad->bias[c] += d;
      double* g = grad->weights.data() + c * q;
      for (std::size_t i = 0; i < q; ++i) g[i] += d * xs[i];
    }
  }
  return total / static_cast<double>(n);
}

TrainResult train_linear(const IdxDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.count == 0) throw DomainError("cannot train on an empty dataset");
  constexpr std::size_t kClasses = 10;
  const std::size_t q = data.pixels();
  const FixedFormat fmt = training_input_format(cfg.bits);

  // The forward pass sees quantized pixels. The quantizer precedes every
  // parameter, so the straight-through backward pass is just the identity
  // on these features.
  double levels[256];
  for (int v = 0; v < 256; ++v) levels[v] = dequantize(quantize(v / 255.0, fmt), fmt);
  std::vector<double> features(data.count * q);
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = levels[data.images[i]];

  LinearModel model(q, kClasses), grad;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  const std::size_t batch = std::min(cfg.minibatch, data.count);
  std::vector<double> bx(batch * q);
  std::vector<std::uint8_t> by(batch);
  TrainResult result;
  double window_sum = 0;
  std::size_t window_count = 0;
  for (std::size_t t = 1; t <= cfg.episodes; ++t) {
    for (std::size_t s = 0; s < batch; ++s) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(idx * q), q,
                  bx.begin() + static_cast<std::ptrdiff_t>(s * q));
      by[s] = data.labels[idx];
    }
    const double loss = softmax_loss(model, bx, by, &grad);
    if (!std::isfinite(loss)) throw TrainingError("loss became non-finite at episode " + std::to_string(t));
    const double lr = cfg.rate(t);
    for (std::size_t i = 0; i < model.weights.size(); ++i) model.weights[i] -= lr * grad.weights[i];
    for (std::size_t c = 0; c < kClasses; ++c) model.bias[c] -= lr * grad.bias[c];
    window_sum += loss;
    if (++window_count == cfg.loss_window || t == cfg.episodes) {
      result.window_losses.push_back(window_sum / static_cast<double>(window_count));
      window_sum = 0;
      window_count = 0;
    }
  }

  LayerRecord dense;
  dense.name = "dense";
  dense.kind = RecordKind::dense;
  dense.shape = {kClasses, q};
  dense.input_format = to_string(Format{fmt});
  dense.weights.assign(model.weights.begin(), model.weights.end());
  dense.bias.assign(model.bias.begin(), model.bias.end());
  for (const float v : dense.weights)
    if (!std::isfinite(v)) throw TrainingError("weights overflow float32");
  LayerRecord head;
  head.name = "argmax";
  head.kind = RecordKind::argmax;

  auto& c = result.weights;
  c.input_shape = {q};
  c.layers = {std::move(dense), std::move(head)};
  c.metadata = {{"input_format", to_string(Format{fmt})},
                {"input_nonnegative", "true"},
                {"bits", std::to_string(cfg.bits)},
                {"episodes", std::to_string(cfg.episodes)},
                {"minibatch", std::to_string(cfg.minibatch)},
                {"seed", std::to_string(cfg.seed)}};
  return result;
}

}  // namespace lutnet
