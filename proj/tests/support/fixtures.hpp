#pragma once

// Small builders shared by the unit tests.

#include <random>
#include <string>
#include <vector>

#include "lutnet/formats.hpp"
#include "lutnet/model.hpp"
#include "reference.hpp"

namespace fx {

inline lutnet::QuantizedTensor tensor(std::vector<std::size_t> shape, const lutnet::Format& f,
                                      std::vector<lutnet::Code> codes) {
  lutnet::QuantizedTensor t;
  t.shape = std::move(shape);
  t.format = f;
  t.codes = std::move(codes);
  return t;
}

inline lutnet::QuantizedTensor random_tensor(std::vector<std::size_t> shape, const lutnet::Format& f,
                                             std::mt19937_64& rng) {
  const std::size_t n = lutnet::element_count(shape);
  std::vector<lutnet::Code> codes(n);
  const auto* ff = std::get_if<lutnet::FloatFormat>(&f);
  for (auto& c : codes) {
    if (ff != nullptr) {
      // Finite, non-negative codes: exponent field below the reserved value.
      do c = static_cast<lutnet::Code>(rng() & ((1u << (ff->width() - 1)) - 1));
      while (!lutnet::is_finite(c, f));
    } else {
      c = static_cast<lutnet::Code>(rng() & ((1ull << lutnet::width(f)) - 1));
    }
  }
  return tensor(std::move(shape), f, std::move(codes));
}

inline lutnet::LayerRecord dense_record(std::string name, std::size_t p, std::size_t q, std::mt19937_64& rng,
                                        std::string activation = "none", std::string input_format = "") {
  lutnet::LayerRecord r;
  r.name = std::move(name);
  r.kind = lutnet::RecordKind::dense;
  r.shape = {p, q};
  r.weights = ref::dyadic_weights(p * q, rng);
  r.bias = ref::dyadic_weights(p, rng);
  r.activation = std::move(activation);
  r.input_format = std::move(input_format);
  return r;
}

inline lutnet::LayerRecord conv_record(std::string name, std::size_t k, std::size_t cin, std::size_t cout,
                                       std::mt19937_64& rng, std::string activation = "none") {
  lutnet::LayerRecord r;
  r.name = std::move(name);
  r.kind = lutnet::RecordKind::conv2d;
  r.shape = {k, k, cin, cout};
  r.weights = ref::dyadic_weights(k * k * cin * cout, rng);
  r.bias = ref::dyadic_weights(cout, rng);
  r.activation = std::move(activation);
  return r;
}

inline lutnet::LayerRecord argmax_record() {
  lutnet::LayerRecord r;
  r.name = "argmax";
  r.kind = lutnet::RecordKind::argmax;
  return r;
}

/// 784 -> 10 linear classifier on u3@-3 pixels, followed by argmax.
inline lutnet::WeightContainer linear_container(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  lutnet::WeightContainer c;
  c.input_shape = {784};
  c.layers = {dense_record("dense", 10, 784, rng, "none", "u3@-3"), argmax_record()};
  c.metadata["input_format"] = "u3@-3";
  c.metadata["input_nonnegative"] = "true";
  return c;
}

/// 784-1024-512-10 with relu, u8 pixel inputs.
inline lutnet::WeightContainer mlp_container(std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  lutnet::WeightContainer c;
  c.input_shape = {784};
  c.layers = {dense_record("fc1", 1024, 784, rng, "relu", "u8@-8"), dense_record("fc2", 512, 1024, rng, "relu"),
              dense_record("fc3", 10, 512, rng), argmax_record()};
  c.metadata["input_format"] = "u8@-8";
  return c;
}

/// Tiny labeled set of 28x28 images with a class-dependent bright stripe.
inline lutnet::IdxDataset stripe_dataset(std::size_t n, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  lutnet::IdxDataset d;
  d.count = d.declared = n;
  d.images.assign(n * 784, 0);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(i % 10);
    d.labels[i] = label;
    for (std::size_t x = 0; x < 28; ++x) {
      d.images[i * 784 + (2 + 2 * label) * 28 + x] = 255;
      d.images[i * 784 + (rng() % 784)] = static_cast<std::uint8_t>(rng() % 128);
    }
  }
  return d;
}

}  // namespace fx
