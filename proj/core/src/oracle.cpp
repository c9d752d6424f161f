#include "lutnet/oracle.hpp"

#include <cmath>

#include "lutnet/errors.hpp"
#include "parallel.hpp"

namespace lutnet {

namespace {

/// Exact dyadic values of a tensor on its format's finest grid.
std::vector<Wide> exact_values(const QuantizedTensor& t, int& exponent) {
  exponent = quantum_exponent(t.format);
  std::vector<Wide> out(t.codes.size());
  for (std::size_t i = 0; i < t.codes.size(); ++i) {
    if (!is_finite(t.codes[i], t.format)) throw RunError("non-finite input to the reference evaluator");
    out[i] = exact_value(t.codes[i], t.format, exponent);
  }
  return out;
}

struct Grid {
  DyadicWeights w;
  std::vector<Wide> bias;
  int exponent = 0;  ///< accumulator grid
};

Grid snap_layer(const LayerRecord& rec, std::size_t outputs, int input_exponent) {
  Grid g;
  g.w = snap_weights(rec.weights, weight_grid_exponent(rec.weights));
  g.exponent = g.w.exponent + input_exponent;
  g.bias.assign(outputs, 0);
  for (std::size_t j = 0; j < rec.bias.size() && j < outputs; ++j) g.bias[j] = snap_to_grid(rec.bias[j], g.exponent);
  return g;
}

QuantizedTensor affine(const LayerRecord& rec, const QuantPoint& pt, const QuantizedTensor& in) {
  int xe = 0;
  const std::vector<Wide> x = exact_values(in, xe);
  QuantizedTensor out;
  out.format = pt.output_format;
  std::vector<Wide> acc;
  int exponent = 0;
  if (rec.kind == RecordKind::dense) {
    const std::size_t p = rec.shape[0], q = rec.shape[1];
    if (x.size() != q) throw RunError("dense record '" + rec.name + "' expects " + std::to_string(q) + " inputs");
    const Grid g = snap_layer(rec, p, xe);
    exponent = g.exponent;
    acc = g.bias;
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < q; ++i) acc[j] += static_cast<Wide>(g.w.values[j * q + i]) * x[i];
    out.shape = {p};
  } else {
    const std::size_t k = rec.shape[0], cin = rec.shape[2], cout = rec.shape[3];
    const std::size_t r = (k - 1) / 2;
    if (in.shape.size() != 3 || in.shape[2] != cin) throw RunError("conv record '" + rec.name + "' input shape mismatch");
    const std::size_t H = in.shape[0], W = in.shape[1];
    const Grid g = snap_layer(rec, cout, xe);
    exponent = g.exponent;
    acc.assign(H * W * cout, 0);
    // "same" cross-correlation, zero padding.
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t co = 0; co < cout; ++co) {
          Wide s = g.bias[co];
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long sy = static_cast<long>(y + ky) - static_cast<long>(r);
              const long sx = static_cast<long>(xx + kx) - static_cast<long>(r);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
              for (std::size_t ci = 0; ci < cin; ++ci)
                s += static_cast<Wide>(g.w.values[((ky * k + kx) * cin + ci) * cout + co]) *
                     x[(static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * cin + ci];
            }
          acc[(y * W + xx) * cout + co] = s;
        }
    out.shape = {H, W, cout};
  }
  out.codes.resize(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out.codes[j] = round_exact(acc[j], exponent, pt.output_format);
  return out;
}

/// f(x, i) straight from its definition on the two fixed-point grids.
QuantizedTensor stochastic(const QuantPoint& pt, const QuantizedTensor& in, std::uint64_t& counter) {
  const auto& from = std::get<FixedFormat>(pt.input_format);
  const auto& to = std::get<FixedFormat>(pt.output_format);
  const std::size_t R = pt.sequence.size();
  const double eps = std::ldexp(1.0, to.scale);
  QuantizedTensor out{in.shape, pt.output_format, std::vector<Code>(in.codes.size())};
  for (std::size_t i = 0; i < in.codes.size(); ++i) {
    const double x = std::ldexp(static_cast<double>(from.integer(in.codes[i])), from.scale);
    const double lower = std::floor(x / eps);
    const double r = pt.sequence[counter % R];
    double pick = r <= 1.0 + (lower * eps - x) / eps ? lower : lower + 1;
    pick = std::clamp(pick, static_cast<double>(to.min_integer()), static_cast<double>(to.max_integer()));
    out.codes[i] = to.encode_integer(static_cast<std::int64_t>(pick));
    counter = (counter + 1) % R;
  }
  return out;
}

}  // namespace

QuantSpec QuantSpec::from_plan(const NetworkPlan& plan, const WeightContainer& weights) {
  QuantSpec spec;
  spec.input_format = plan.input_format;
  spec.input_shape = plan.input_shape;
  std::size_t next = 0;
  auto take = [&](auto match) {
    while (next < weights.layers.size() && !match(weights.layers[next].kind)) ++next;
    if (next >= weights.layers.size()) throw CompileError("plan does not match the weight container");
    return next++;
  };
  for (const auto& l : plan.layers) {
    QuantPoint pt;
    pt.input_format = l.input_format;
    pt.output_format = l.output_format;
    pt.input_shape = l.input_shape;
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::conv2d:
        pt.op = QuantPoint::Op::affine;
        pt.record = take([](RecordKind k) { return k == RecordKind::dense || k == RecordKind::conv2d; });
        break;
      case LayerKind::activation: {
        const auto& a = std::get<ActivationBody>(l.body);
        pt.op = a.kind == ActivationKind::relu ? QuantPoint::Op::relu
                : a.function == "identity"     ? QuantPoint::Op::requantize
                                               : QuantPoint::Op::function;
        pt.function = a.function;
        break;
      }
      case LayerKind::round:
        pt.op = QuantPoint::Op::stochastic_round;
        pt.sequence = std::get<RoundBody>(l.body).table.sequence();
        break;
      case LayerKind::pool:
        pt.op = QuantPoint::Op::pool;
        pt.record = take([](RecordKind k) { return k == RecordKind::maxpool; });
        break;
      case LayerKind::argmax:
        pt.op = QuantPoint::Op::argmax;
        pt.record = take([](RecordKind k) { return k == RecordKind::argmax; });
        break;
    }
    spec.points.push_back(std::move(pt));
  }
  return spec;
}

QuantSpec QuantSpec::from_config(const WeightContainer& weights, const NetworkConfig& cfg) {
  NetworkConfig dry = cfg;
  dry.cost_only = true;
  return from_plan(compile_network(weights, dry), weights);
}

QuantizedTensor evaluate(const WeightContainer& weights, const QuantSpec& spec, const QuantizedTensor& input,
                         std::uint64_t seed) {
  if (!(input.format == spec.input_format)) throw RunError("input format does not match the quantization spec");
  if (input.codes.size() != element_count(spec.input_shape)) throw RunError("input size does not match the spec");
  QuantizedTensor x = input;
  x.shape = spec.input_shape;
  std::vector<std::uint64_t> counters;
  std::size_t round_index = 0;
  for (const auto& pt : spec.points)
    if (pt.op == QuantPoint::Op::stochastic_round) counters.push_back(seed % pt.sequence.size());
  for (const auto& pt : spec.points) {
    if (!(x.format == pt.input_format)) throw RunError("format mismatch between quantization points");
    if (x.codes.size() != element_count(pt.input_shape)) throw RunError("shape mismatch between quantization points");
    x.shape = pt.input_shape;
    switch (pt.op) {
      case QuantPoint::Op::affine: x = affine(weights.layers.at(pt.record), pt, x); break;
      case QuantPoint::Op::relu:
        for (auto& c : x.codes)
          if (dequantize(c, x.format) <= 0.0) c = quantize(0.0, x.format);
        break;
      case QuantPoint::Op::function:
      case QuantPoint::Op::requantize: {
        const auto fn = activation_function(pt.function);
        for (auto& c : x.codes) c = quantize(fn(dequantize(c, pt.input_format)), pt.output_format);
        x.format = pt.output_format;
        break;
      }
      case QuantPoint::Op::stochastic_round: x = stochastic(pt, x, counters[round_index++]); break;
      case QuantPoint::Op::pool: {
        const std::size_t w = weights.layers.at(pt.record).shape.empty() ? 2 : weights.layers[pt.record].shape[0];
        const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
        QuantizedTensor out{{H / w, W / w, C}, x.format, std::vector<Code>((H / w) * (W / w) * C)};
        for (std::size_t y = 0; y < H / w; ++y)
          for (std::size_t xx = 0; xx < W / w; ++xx)
            for (std::size_t c = 0; c < C; ++c) {
              Code best = x.codes[((y * w) * W + xx * w) * C + c];
              for (std::size_t dy = 0; dy < w; ++dy)
                for (std::size_t dx = 0; dx < w; ++dx) {
                  const Code v = x.codes[((y * w + dy) * W + xx * w + dx) * C + c];
                  if (dequantize(v, x.format) > dequantize(best, x.format)) best = v;
                }
              out.codes[(y * (W / w) + xx) * C + c] = best;
            }
        x = std::move(out);
        break;
      }
      case QuantPoint::Op::argmax: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < x.codes.size(); ++i)
          if (dequantize(x.codes[i], x.format) > dequantize(x.codes[best], x.format)) best = i;
        x = QuantizedTensor{{1}, pt.output_format, {static_cast<Code>(best)}};
        break;
      }
    }
  }
  return x;
}

Evaluation evaluate_dataset(const WeightContainer& weights, const QuantSpec& spec, const IdxDataset& data,
                            std::size_t limit, std::uint64_t seed) {
  const std::size_t n = limit == 0 ? data.count : std::min(limit, data.count);
  if (n == 0) throw RunError("cannot evaluate on an empty dataset");
  std::vector<std::uint32_t> preds(n);
  detail::parallel_for(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const QuantizedTensor x = image_tensor(data.image(i), data.pixels(), spec.input_shape, spec.input_format);
      const QuantizedTensor y = evaluate(weights, spec, x, seed);
      // Lowest index wins ties, as in the engine.
      std::size_t best = 0;
      for (std::size_t j = 1; j < y.codes.size(); ++j)
        if (dequantize(y.codes[j], y.format) > dequantize(y.codes[best], y.format)) best = j;
      preds[i] = y.codes.size() == 1 ? y.codes[0] : static_cast<std::uint32_t>(best);
    }
  });
  return score_predictions(std::move(preds), data);
}

double accuracy(const WeightContainer& weights, const QuantSpec& spec, const IdxDataset& data) {
  return evaluate_dataset(weights, spec, data).accuracy();
}

}  // namespace lutnet
