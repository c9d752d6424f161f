#include "lutnet/engine.hpp"

#include <algorithm>

#include "lutnet/errors.hpp"
#include "parallel.hpp"

namespace lutnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_codes(const QuantizedTensor& t, const Format& f, const std::string& layer) {
  const unsigned w = width(f);
  const Code mask = w >= 32 ? ~Code{0} : (Code{1} << w) - 1;
  for (const Code c : t.codes) {
    if ((c & ~mask) != 0) throw RunError("layer '" + layer + "': input code wider than its format");
    if (!is_finite(c, f)) throw RunError("layer '" + layer + "': non-finite input");
  }
}

/// Per-pass index fields of every input element.
std::vector<std::vector<std::uint32_t>> pass_fields(const std::vector<Code>& codes, const IndexLayout& layout,
                                                    const std::vector<PassSpec>& passes) {
  std::vector<std::vector<std::uint32_t>> out(passes.size(), std::vector<std::uint32_t>(codes.size()));
  for (std::size_t p = 0; p < passes.size(); ++p)
    for (std::size_t i = 0; i < codes.size(); ++i) out[p][i] = element_field(codes[i], layout, passes[p]);
  return out;
}

void combine(std::span<Wide> acc, std::span<const Wide> reg, const PassSpec& pass) {
  if (pass.subtract) {
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] -= reg[j] << pass.shift;
  } else {
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += reg[j] << pass.shift;
  }
}

QuantizedTensor round_out(const LayerPlan& layer, const std::vector<Wide>& acc, int exponent) {
  QuantizedTensor out;
  out.shape = layer.output_shape;
  out.format = layer.output_format;
  out.codes.resize(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out.codes[j] = round_exact(acc[j], exponent, layer.output_format);
  return out;
}

QuantizedTensor run_dense(const LayerPlan& layer, const DenseBody& body, const QuantizedTensor& in, OpTally& t) {
  const auto fields = pass_fields(in.codes, body.layout, body.passes);
  std::vector<Wide> acc(body.p, 0);
  if (body.bias_mode == BiasMode::accumulator) acc = body.bias;
  std::vector<Wide> reg(body.p, 0);
  const unsigned eb = body.layout.element_bits;
  for (const Step& s : layer.schedule) {
    if (s.op == StepOp::combine) {
      combine(acc, reg, body.passes[s.pass]);
      t.shift_adds_c2 += body.p;
      continue;
    }
    if (s.op == StepOp::lookup_load) std::fill(reg.begin(), reg.end(), Wide{0});
    const auto& f = fields[s.pass];
    std::uint64_t index = 0;
    unsigned at = 0;
    for (const auto e : body.chunks[s.chunk]) {
      index |= std::uint64_t{f[e]} << at;
      at += eb;
    }
    layer.bank.resolve(s.table).accumulate(index, reg);
    ++t.lut_evals;
    if (s.op == StepOp::lookup_add) {
      t.shift_adds_c1 += body.p;
      t.shift_adds_c2 += body.p;
    }
  }
  return round_out(layer, acc, body.acc_exponent);
}

QuantizedTensor run_conv(const LayerPlan& layer, const ConvBody& body, const QuantizedTensor& in, OpTally& t) {
  const auto fields = pass_fields(in.codes, body.layout, body.passes);
  const std::size_t H = body.height, W = body.width, C = body.in_channels, K = body.out_channels;
  const std::size_t m = body.block, r = body.radius, h = body.halo();
  const std::size_t PH = body.blocks_y * m + 2 * r;
  const std::size_t PW = body.blocks_x * m + 2 * r;
  const unsigned eb = body.layout.element_bits;
  const std::size_t blocks = body.block_count();

  std::vector<Wide> acc(H * W * K);
  for (std::size_t i = 0; i < H * W; ++i)
    std::copy(body.bias.begin(), body.bias.end(), acc.begin() + static_cast<std::ptrdiff_t>(i * K));
  std::vector<Wide> reg(PH * PW * K, 0);
  std::vector<Wide> halo(h * h * K);
  std::vector<Wide> cropped(H * W * K);
  for (const Step& s : layer.schedule) {
    if (s.op == StepOp::combine) {
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          std::copy_n(reg.begin() + static_cast<std::ptrdiff_t>(((y + r) * PW + x + r) * K), K,
                      cropped.begin() + static_cast<std::ptrdiff_t>((y * W + x) * K));
      combine(acc, cropped, body.passes[s.pass]);
      t.shift_adds_c2 += H * W * K;
      continue;
    }
    if (s.op == StepOp::lookup_load) std::fill(reg.begin(), reg.end(), Wide{0});
    const std::size_t ci = s.chunk / blocks;
    const std::size_t b = s.chunk % blocks;
    const std::size_t oy = (b / body.blocks_x) * m;
    const std::size_t ox = (b % body.blocks_x) * m;
    const auto& f = fields[s.pass];
    std::uint64_t index = 0;
    unsigned at = 0;
    for (std::size_t dy = 0; dy < m; ++dy)
      for (std::size_t dx = 0; dx < m; ++dx, at += eb) {
        const std::size_t y = oy + dy, x = ox + dx;
        if (y < H && x < W) index |= std::uint64_t{f[(y * W + x) * C + ci]} << at;
      }
    layer.bank.resolve(s.table).read(index, halo);
    ++t.lut_evals;
    // Halo origin in padded coordinates is the block origin.
    for (std::size_t hy = 0; hy < h; ++hy) {
      Wide* dst = reg.data() + ((oy + hy) * PW + ox) * K;
      const Wide* src = halo.data() + hy * h * K;
      for (std::size_t e = 0; e < h * K; ++e) dst[e] += src[e];
    }
    if (s.op == StepOp::lookup_add) {
      t.shift_adds_c1 += h * h * K;
      t.shift_adds_c2 += h * h * K;
    }
  }
  return round_out(layer, acc, body.acc_exponent);
}

QuantizedTensor run_activation(const LayerPlan& layer, const ActivationBody& body, const QuantizedTensor& in,
                               OpTally& t) {
  QuantizedTensor out{layer.output_shape, layer.output_format, std::vector<Code>(in.codes.size())};
  if (body.kind == ActivationKind::relu) {
    for (std::size_t i = 0; i < in.codes.size(); ++i) out.codes[i] = relu(in.codes[i], layer.input_format);
    t.compares += in.codes.size();
    return out;
  }
  const Lut& lut = layer.bank.resolve(0);
  for (std::size_t i = 0; i < in.codes.size(); ++i) out.codes[i] = static_cast<Code>(lut.raw(in.codes[i], 0));
  t.lut_evals += in.codes.size();
  return out;
}

QuantizedTensor run_pool(const LayerPlan& layer, const PoolBody& body, const QuantizedTensor& in, OpTally& t) {
  const std::size_t oh = layer.output_shape[0], ow = layer.output_shape[1], C = body.channels, w = body.window;
  QuantizedTensor out{layer.output_shape, layer.output_format, std::vector<Code>(oh * ow * C)};
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        Code best = in.codes[((y * w) * body.width + x * w) * C + c];
        for (std::size_t dy = 0; dy < w; ++dy)
          for (std::size_t dx = 0; dx < w; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const Code v = in.codes[((y * w + dy) * body.width + x * w + dx) * C + c];
            if (code_less(best, v, layer.input_format)) best = v;
            ++t.compares;
          }
        out.codes[(y * ow + x) * C + c] = best;
      }
  return out;
}

QuantizedTensor run_argmax(const LayerPlan& layer, const QuantizedTensor& in, OpTally& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < in.codes.size(); ++i) {
    if (code_less(in.codes[best], in.codes[i], layer.input_format)) best = i;
    ++t.compares;
  }
  return QuantizedTensor{{1}, layer.output_format, {static_cast<Code>(best)}};
}

QuantizedTensor run_round(const LayerPlan& layer, const RoundBody& body, const QuantizedTensor& in, OpTally& t,
                          StochasticRounder* rounder) {
  StochasticRounder local(body.table);
  StochasticRounder& unit = rounder != nullptr ? *rounder : local;
  if (&unit.table() != &body.table && !(unit.table() == body.table))
    throw RunError("rounder does not belong to layer '" + layer.name + "'");
  QuantizedTensor out{layer.output_shape, layer.output_format, std::vector<Code>(in.codes.size())};
  for (std::size_t i = 0; i < in.codes.size(); ++i) out.codes[i] = unit.round(in.codes[i]);
  t.lut_evals += in.codes.size();
  return out;
}

}  // namespace

OpTally& OpTally::operator+=(const OpTally& o) {
  lut_evals += o.lut_evals;
  shift_adds_c1 += o.shift_adds_c1;
  shift_adds_c2 += o.shift_adds_c2;
  compares += o.compares;
  multiplies += o.multiplies;
  return *this;
}

std::string to_string(MicroOp op) {
  switch (op) {
    case MicroOp::lookup: return "lookup";
    case MicroOp::shift: return "shift";
    case MicroOp::add: return "add";
    case MicroOp::subtract: return "subtract";
    case MicroOp::compare: return "compare";
    case MicroOp::select: return "select";
  }
  return "?";
}

std::set<MicroOp> step_vocabulary(const LayerPlan& layer) {
  std::set<MicroOp> ops;
  auto passes = [&]() -> const std::vector<PassSpec>* {
    if (const auto* d = std::get_if<DenseBody>(&layer.body)) return &d->passes;
    if (const auto* c = std::get_if<ConvBody>(&layer.body)) return &c->passes;
    return nullptr;
  }();
  for (const Step& s : layer.schedule) {
    switch (s.op) {
      case StepOp::lookup_load: ops.insert(MicroOp::lookup); break;
      case StepOp::lookup_add:
        ops.insert(MicroOp::lookup);
        ops.insert(MicroOp::add);
        break;
      case StepOp::combine: {
        const PassSpec& p = passes->at(s.pass);
        if (p.shift != 0) ops.insert(MicroOp::shift);
        ops.insert(p.subtract ? MicroOp::subtract : MicroOp::add);
        break;
      }
    }
  }
  std::visit(overloaded{[&](const ActivationBody& a) {
                          if (a.kind == ActivationKind::relu) {
                            ops.insert(MicroOp::compare);
                            ops.insert(MicroOp::select);
                          }
                        },
                        [&](const PoolBody&) {
                          ops.insert(MicroOp::compare);
                          ops.insert(MicroOp::select);
                        },
                        [&](const ArgmaxBody&) {
                          ops.insert(MicroOp::compare);
                          ops.insert(MicroOp::select);
                        },
                        [&](const auto&) {}},
             layer.body);
  return ops;
}

std::set<MicroOp> step_vocabulary(const NetworkPlan& plan) {
  std::set<MicroOp> ops;
  for (const auto& l : plan.layers) ops.merge(step_vocabulary(l));
  return ops;
}

QuantizedTensor run_layer(const LayerPlan& layer, const QuantizedTensor& input, OpTally* tally,
                          StochasticRounder* rounder) {
  if (layer.cost_only || !layer.bank.materialized())
    throw RunError("layer '" + layer.name + "' is cost-only and cannot run");
  if (element_count(input.shape) != element_count(layer.input_shape) || input.codes.size() != element_count(layer.input_shape))
    throw RunError("layer '" + layer.name + "' expects " + std::to_string(element_count(layer.input_shape)) +
                   " input elements, got " + std::to_string(input.codes.size()));
  if (!(input.format == layer.input_format))
    throw RunError("layer '" + layer.name + "' expects " + to_string(layer.input_format) + " input, got " +
                   to_string(input.format));
  check_codes(input, layer.input_format, layer.name);
  OpTally local;
  OpTally& t = tally != nullptr ? *tally : local;
  return std::visit(overloaded{[&](const DenseBody& b) { return run_dense(layer, b, input, t); },
                               [&](const ConvBody& b) { return run_conv(layer, b, input, t); },
                               [&](const ActivationBody& b) { return run_activation(layer, b, input, t); },
                               [&](const PoolBody& b) { return run_pool(layer, b, input, t); },
                               [&](const ArgmaxBody&) { return run_argmax(layer, input, t); },
                               [&](const RoundBody& b) { return run_round(layer, b, input, t, rounder); }},
                    layer.body);
}

Engine::Engine(const NetworkPlan& plan, std::uint64_t seed) : plan_(&plan) {
  rounder_of_layer_.assign(plan.layers.size(), SIZE_MAX);
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    if (const auto* b = std::get_if<RoundBody>(&plan.layers[i].body)) {
      rounder_of_layer_[i] = rounders_.size();
      rounders_.emplace_back(b->table, seed);
    }
  }
}

void Engine::reset(std::uint64_t seed) {
  for (auto& r : rounders_) r.reset(seed);
}

QuantizedTensor Engine::run(const QuantizedTensor& input, OpTally* tally) {
  if (!(input.format == plan_->input_format))
    throw RunError("plan expects " + to_string(plan_->input_format) + " input, got " + to_string(input.format));
  if (input.codes.size() != element_count(plan_->input_shape))
    throw RunError("plan expects " + std::to_string(element_count(plan_->input_shape)) + " input elements, got " +
                   std::to_string(input.codes.size()));
  QuantizedTensor x = input;
  for (std::size_t i = 0; i < plan_->layers.size(); ++i) {
    const LayerPlan& layer = plan_->layers[i];
    StochasticRounder* r = rounder_of_layer_[i] == SIZE_MAX ? nullptr : &rounders_[rounder_of_layer_[i]];
    x.shape = layer.input_shape;  // dense layers flatten image inputs
    x = run_layer(layer, x, tally, r);
  }
  return x;
}

QuantizedTensor run(const NetworkPlan& plan, const QuantizedTensor& input, std::uint64_t seed, OpTally* tally) {
  Engine engine(plan, seed);
  return engine.run(input, tally);
}

OpTally count_runtime_ops(const NetworkPlan& plan, const QuantizedTensor& input) {
  OpTally t;
  run(plan, input, 0, &t);
  return t;
}

OpTally scheduled_ops(const LayerPlan& layer) {
  OpTally t;
  const std::size_t in = element_count(layer.input_shape);
  std::visit(overloaded{[&](const DenseBody& b) {
                          for (const Step& s : layer.schedule) {
                            if (s.op != StepOp::combine) ++t.lut_evals;
                            if (s.op != StepOp::lookup_load) t.shift_adds_c2 += b.p;
                            if (s.op == StepOp::lookup_add) t.shift_adds_c1 += b.p;
                          }
                        },
                        [&](const ConvBody& b) {
                          const std::size_t entry = b.halo() * b.halo() * b.out_channels;
                          for (const Step& s : layer.schedule) {
                            if (s.op != StepOp::combine) ++t.lut_evals;
                            if (s.op == StepOp::lookup_add) {
                              t.shift_adds_c1 += entry;
                              t.shift_adds_c2 += entry;
                            }
                            if (s.op == StepOp::combine) t.shift_adds_c2 += b.height * b.width * b.out_channels;
                          }
                        },
                        [&](const ActivationBody& a) {
                          if (a.kind == ActivationKind::relu) t.compares += in;
                          else t.lut_evals += in;
                        },
                        [&](const PoolBody& p) {
                          t.compares += element_count(layer.output_shape) * (p.window * p.window - 1);
                        },
                        [&](const ArgmaxBody&) { t.compares += in - 1; },
                        [&](const RoundBody&) { t.lut_evals += in; }},
             layer.body);
  return t;
}

OpTally scheduled_ops(const NetworkPlan& plan) {
  OpTally t;
  for (const auto& l : plan.layers) t += scheduled_ops(l);
  return t;
}

std::uint32_t predicted_class(const QuantizedTensor& output) {
  if (output.codes.empty()) throw RunError("cannot take the argmax of an empty output");
  if (output.codes.size() == 1) return output.codes[0];
  std::size_t best = 0;
  for (std::size_t i = 1; i < output.codes.size(); ++i)
    if (code_less(output.codes[best], output.codes[i], output.format)) best = i;
  return static_cast<std::uint32_t>(best);
}

Evaluation score_predictions(std::vector<std::uint32_t> predictions, const IdxDataset& data) {
  if (predictions.empty()) throw RunError("cannot score an empty prediction set");
  if (predictions.size() > data.labels.size()) throw RunError("more predictions than labels");
  Evaluation ev;
  std::size_t classes = 10;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    classes = std::max<std::size_t>({classes, std::size_t{data.labels[i]} + 1, std::size_t{predictions[i]} + 1});
  ev.classes = classes;
  ev.samples = predictions.size();
  ev.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ++ev.confusion[data.labels[i]][predictions[i]];
    if (predictions[i] == data.labels[i]) ++ev.correct;
  }
  ev.predictions = std::move(predictions);
  return ev;
}

Evaluation evaluate_plan(const NetworkPlan& plan, const IdxDataset& data, std::size_t limit, std::uint64_t seed) {
  const std::size_t n = limit == 0 ? data.count : std::min(limit, data.count);
  if (n == 0) throw RunError("cannot evaluate on an empty dataset");
  std::vector<std::uint32_t> preds(n);
  detail::parallel_for(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    Engine engine(plan, seed);
    for (std::size_t i = begin; i < end; ++i) {
      engine.reset(seed);
      const QuantizedTensor x = image_tensor(data.image(i), data.pixels(), plan.input_shape, plan.input_format);
      preds[i] = predicted_class(engine.run(x));
    }
  });
  return score_predictions(std::move(preds), data);
}

}  // namespace lutnet
