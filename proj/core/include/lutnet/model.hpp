#pragma once

// In-memory model and dataset types shared by the compiler, oracle, trainer
// and file I/O.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lutnet/formats.hpp"

namespace lutnet {

enum class RecordKind { dense, conv2d, maxpool, argmax };

std::string to_string(RecordKind k);
RecordKind parse_record_kind(const std::string& s);

/// One layer of a trained network.
///   dense:   shape {out, in}, weights row-major out x in, bias out
///   conv2d:  shape {k, k, in_channels, out_channels} with k = 2r+1,
///            weights [ky][kx][ci][co], bias out_channels; stride 1, "same" padding
///   maxpool: shape {window}; stride = window
///   argmax:  shape {}
struct LayerRecord {
  std::string name;
  RecordKind kind = RecordKind::dense;
  std::vector<std::size_t> shape;
  std::vector<float> weights;
  std::vector<float> bias;
  std::string activation = "none";  ///< none | relu | sigmoid | tanh
  std::string input_format;         ///< optional format tag, e.g. "u8@-8", "binary16"

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct WeightContainer {
  std::vector<std::size_t> input_shape;  ///< {q} or {height, width, channels}
  std::vector<LayerRecord> layers;
  std::map<std::string, std::string> metadata;

  /// Output shape of every layer; throws CompileError naming both layers on a mismatch.
  std::vector<std::vector<std::size_t>> output_shapes() const;
  /// Number of dense + conv2d records.
  std::size_t affine_count() const;
  /// Bytes of float32 weight + bias payload.
  std::size_t payload_bytes() const;

  friend bool operator==(const WeightContainer&, const WeightContainer&) = default;
};

/// Labeled 28x28 u8 images, row-major.
struct IdxDataset {
  std::size_t count = 0;
  std::size_t declared = 0;  ///< header count; differs from count only after salvage
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<std::uint8_t> images;
  std::vector<std::uint8_t> labels;

  std::size_t pixels() const { return rows * cols; }
  const std::uint8_t* image(std::size_t i) const { return images.data() + i * pixels(); }
};

/// Pixel bytes scaled to [0, 1] and quantized (round-to-nearest-even) into `format`.
QuantizedTensor image_tensor(const std::uint8_t* pixels, std::size_t count, std::vector<std::size_t> shape,
                             const Format& format);

}  // namespace lutnet
