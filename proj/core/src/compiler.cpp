#include "lutnet/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

constexpr unsigned kAccumulatorLimitBits = 126;

std::uint32_t low_mask(unsigned width) {
  return width >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << width) - 1;
}

/// Planes an element contributes through the magnitude passes.
unsigned magnitude_planes(const Format& f) {
  return std::visit(overloaded{[](const FixedFormat& x) { return x.is_signed ? x.bits - 1 : x.bits; },
                               [](const FloatFormat& x) { return x.mantissa_bits; }},
                    f);
}

/// Largest |field_value| a pass can produce, before its shift.
UWide max_field_value(const IndexLayout& layout, const PassSpec& pass) {
  if (is_fixed(layout.input_format)) return pass.field == PassSpec::Field::msb ? 1 : low_mask(pass.width);
  const auto& f = std::get<FloatFormat>(layout.input_format);
  const int top = f.quantum_exponent(f.max_exponent_field()) - f.min_quantum_exponent();
  const UWide planes = pass.field == PassSpec::Field::whole_code ? low_mask(f.mantissa_bits) : low_mask(pass.width);
  return planes << top;
}

void check_accumulator(UWide bound, const std::string& what) {
  if (bit_length(bound) > kAccumulatorLimitBits)
    throw CompileError(what + ": worst-case accumulator magnitude needs " + std::to_string(bit_length(bound)) +
                       " bits, over the 126-bit limit");
}

std::vector<float> checked(std::vector<float> v, const char* what) {
  for (const float x : v)
    if (!std::isfinite(x)) throw CompileError(std::string("non-finite value in ") + what);
  return v;
}

/// Splits an exact integer b into k integers summing to b.
std::vector<Wide> split_exact(Wide b, std::size_t k) {
  const Wide kk = static_cast<Wide>(k);
  Wide q = b / kk;
  Wide r = b - q * kk;
  if (r < 0) {
    q -= 1;
    r += kk;
  }
  std::vector<Wide> out(k, q);
  for (Wide i = 0; i < r; ++i) out[static_cast<std::size_t>(i)] += 1;
  return out;
}

/// (pass, chunk) steps: load/add for each chunk, one combine per pass.
void build_schedule(LayerPlan& plan, std::size_t passes, std::size_t chunks) {
  plan.schedule.clear();
  plan.bank.logical.clear();
  plan.schedule.reserve(passes * (chunks + 1));
  plan.bank.logical.reserve(passes * chunks);
  for (std::size_t p = 0; p < passes; ++p) {
    for (std::size_t c = 0; c < chunks; ++c) {
      const auto id = static_cast<std::uint32_t>(plan.bank.logical.size());
      plan.bank.logical.push_back(static_cast<std::uint32_t>(c));
      plan.schedule.push_back(
          {c == 0 ? StepOp::lookup_load : StepOp::lookup_add, static_cast<std::uint16_t>(p), id,
           static_cast<std::uint32_t>(c)});
    }
    plan.schedule.push_back({StepOp::combine, static_cast<std::uint16_t>(p), 0, 0});
  }
}

/// Magnitude bound of the whole input on the accumulator grid, summed over
/// every pass (including the MSB pass a signed fixed input will get).
UWide input_bound(const IndexLayout& layout, const std::vector<PassSpec>& passes) {
  UWide total = 0;
  for (const auto& p : passes) total += max_field_value(layout, p) << p.shift;
  if (const auto* x = std::get_if<FixedFormat>(&layout.input_format); x != nullptr && x->is_signed)
    total += UWide{1} << (x->bits - 1);
  return total;
}

/// Fills a table by adding one element's contribution at a time:
/// entry(idx) = entry(idx without its top element) + contribution(top).
template <class Add>
void fill_incremental(Lut& lut, std::span<const Wide> base, unsigned element_bits, Add add_element) {
  const std::size_t n = lut.shape().entry_elements();
  std::vector<Wide> entry(n);
  lut.write(0, base);
  for (std::uint64_t idx = 1; idx < lut.entries(); ++idx) {
    const unsigned top = (bit_length(static_cast<UWide>(idx)) - 1) / element_bits;
    const unsigned low = top * element_bits;
    const std::uint64_t rest = idx & ((std::uint64_t{1} << low) - 1);
    const auto field = static_cast<std::uint32_t>(idx >> low);
    lut.read(rest, entry);
    add_element(top, field, std::span<Wide>(entry));
    lut.write(idx, entry);
  }
}

}  // namespace

std::string to_string(BitMode m) {
  switch (m) {
    case BitMode::whole_word: return "whole-word";
    case BitMode::bitplane: return "bitplane";
    case BitMode::bitplane_group: return "bitplane-group";
  }
  return "?";
}

BitMode parse_bit_mode(const std::string& s) {
  if (s == "whole-word" || s == "whole_word" || s == "word") return BitMode::whole_word;
  if (s == "bitplane") return BitMode::bitplane;
  if (s == "bitplane-group" || s == "bitplane_group") return BitMode::bitplane_group;
  throw CompileError("unknown bit mode '" + s + "'");
}

std::string to_string(BiasMode m) { return m == BiasMode::accumulator ? "accumulator" : "per-table"; }

BiasMode parse_bias_mode(const std::string& s) {
  if (s == "accumulator") return BiasMode::accumulator;
  if (s == "per-table" || s == "per_table") return BiasMode::per_table;
  throw CompileError("unknown bias mode '" + s + "'");
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::activation: return "activation";
    case LayerKind::pool: return "pool";
    case LayerKind::argmax: return "argmax";
    case LayerKind::round: return "round";
  }
  return "?";
}

PartitionConfig PartitionConfig::uniform(std::size_t q, std::size_t chunk_size, BitMode mode, Format input_format,
                                         unsigned group) {
  if (chunk_size == 0) throw CompileError("chunk size must be positive");
  PartitionConfig cfg;
  cfg.bit_mode = mode;
  cfg.group = group;
  cfg.input_format = input_format;
  for (std::size_t start = 0; start < q; start += chunk_size) {
    std::vector<std::uint32_t> chunk;
    for (std::size_t i = start; i < std::min(q, start + chunk_size); ++i) chunk.push_back(static_cast<std::uint32_t>(i));
    cfg.chunks.push_back(std::move(chunk));
  }
  return cfg;
}

std::vector<std::size_t> PartitionConfig::chunk_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& c : chunks) out.push_back(c.size());
  return out;
}

std::vector<std::string> PartitionConfig::validate(std::size_t q) const {
  lutnet::validate(input_format);
  std::vector<char> seen(q, 0);
  std::size_t covered = 0;
  for (const auto& chunk : chunks) {
    if (chunk.empty()) throw CompileError("empty chunk in partition");
    for (const auto i : chunk) {
      if (i >= q) throw CompileError("chunk element " + std::to_string(i) + " outside 0.." + std::to_string(q - 1));
      if (seen[i] != 0) throw CompileError("element " + std::to_string(i) + " appears in two chunks");
      seen[i] = 1;
      ++covered;
    }
  }
  if (covered != q) throw CompileError("chunks cover " + std::to_string(covered) + " of " + std::to_string(q) + " elements");
  const unsigned planes = magnitude_planes(input_format);
  if (bit_mode == BitMode::bitplane_group && planes == 0) throw CompileError("a 1-bit signed input has no planes to group");
  if (bit_mode == BitMode::bitplane_group && (group == 0 || planes % group != 0))
    throw CompileError("bitplane group of " + std::to_string(group) + " does not divide " + std::to_string(planes) +
                       " planes");
  std::vector<std::string> warnings;
  if (bit_mode == BitMode::whole_word) {
    const IndexLayout layout = make_layout(input_format, bit_mode, group, nonnegative_input);
    for (std::size_t c = 0; c < chunks.size(); ++c)
      if (chunks[c].size() * layout.element_bits == 1)
        warnings.push_back("chunk " + std::to_string(c) +
                           " indexes a whole-word table with a single bit; merging chunks saves additions");
  }
  return warnings;
}

IndexLayout make_layout(const Format& input, BitMode mode, unsigned group, bool nonnegative) {
  IndexLayout layout;
  layout.input_format = input;
  const unsigned g = mode == BitMode::bitplane_group ? group : 1;
  std::visit(overloaded{[&](const FixedFormat& f) {
                          // A 1-bit signed word is all sign: its tables still take one bit per element.
                          const unsigned planes = f.is_signed ? std::max(1u, f.bits - 1) : f.bits;
                          layout.value_bits = mode == BitMode::whole_word ? planes : g;
                          layout.element_bits = layout.value_bits;
                        },
                        [&](const FloatFormat& f) {
                          layout.sign_in_index = f.has_sign && !nonnegative;
                          if (mode == BitMode::whole_word) {
                            layout.element_bits = f.width() - (f.has_sign && nonnegative ? 1 : 0);
                            layout.value_bits = layout.element_bits;
                          } else {
                            layout.value_bits = g;
                            layout.element_bits = g + f.exponent_bits + (layout.sign_in_index ? 1 : 0);
                          }
                        }},
             input);
  return layout;
}

std::vector<PassSpec> magnitude_passes(const IndexLayout& layout, BitMode mode) {
  const unsigned planes = magnitude_planes(layout.input_format);
  std::vector<PassSpec> passes;
  if (planes == 0) return passes;  // 1-bit signed: only the MSB pass, added by compile_signed
  if (mode == BitMode::whole_word) {
    if (is_float(layout.input_format))
      passes.push_back({PassSpec::Field::whole_code, 0, layout.element_bits, 0, false});
    else
      passes.push_back({PassSpec::Field::planes, 0, planes, 0, false});
    return passes;
  }
  const unsigned g = layout.value_bits;
  for (unsigned low = 0; low < planes; low += g) passes.push_back({PassSpec::Field::planes, low, g, low, false});
  return passes;
}

std::uint32_t element_field(Code code, const IndexLayout& layout, const PassSpec& pass) {
  if (const auto* f = std::get_if<FixedFormat>(&layout.input_format)) {
    if (pass.field == PassSpec::Field::msb) return (code >> (f->bits - 1)) & 1u;
    return (code >> pass.low) & low_mask(pass.width);
  }
  const auto& f = std::get<FloatFormat>(layout.input_format);
  const unsigned sign = float_sign(code, f);
  if (sign != 0 && !layout.sign_in_index) {
    if ((code & low_mask(f.width() - 1)) != 0) throw RunError("negative input routed into a table built without a sign bit");
    return 0;  // -0
  }
  if (pass.field == PassSpec::Field::whole_code) return code & low_mask(layout.element_bits);
  const std::uint32_t planes = (float_mantissa(code, f) >> pass.low) & low_mask(pass.width);
  std::uint32_t field = planes | (float_exponent_field(code, f) << pass.width);
  if (layout.sign_in_index) field |= sign << (pass.width + f.exponent_bits);
  return field;
}

Wide field_value(std::uint32_t field, const IndexLayout& layout, const PassSpec::Field kind) {
  if (is_fixed(layout.input_format)) return static_cast<Wide>(field);
  const auto& f = std::get<FloatFormat>(layout.input_format);
  const int xq = f.min_quantum_exponent();
  if (kind == PassSpec::Field::whole_code) {
    // Sign-less whole-code tables see the code without its sign bit.
    if (!is_finite(field, f)) return 0;
    return exact_value(field, f, xq);
  }
  const unsigned g = layout.value_bits;
  const std::uint32_t planes = field & low_mask(g);
  const unsigned e = (field >> g) & low_mask(f.exponent_bits);
  if (e == (1u << f.exponent_bits) - 1) return 0;  // Inf/NaN never reach the engine
  const bool negative = layout.sign_in_index && ((field >> (g + f.exponent_bits)) & 1u) != 0;
  const Wide v = static_cast<Wide>(planes) << (f.quantum_exponent(e) - xq);
  return negative ? -v : v;
}

UWide LayerPlan::nominal_size_bits(std::optional<unsigned> element_bits) const {
  const bool affine = kind == LayerKind::dense || kind == LayerKind::conv2d;
  UWide total = 0;
  for (const auto& s : bank.shapes) {
    LutShape t = s;
    if (element_bits) t.element_bits = *element_bits;
    else if (affine) t.element_bits = width(output_format);
    total = saturating_add(total, t.size_bits());
  }
  return total;
}

bool NetworkPlan::cost_only() const {
  return std::any_of(layers.begin(), layers.end(), [](const LayerPlan& l) { return l.cost_only; });
}

UWide NetworkPlan::size_bits() const {
  UWide total = 0;
  for (const auto& l : layers) total = saturating_add(total, l.bank.size_bits());
  return total;
}

UWide NetworkPlan::nominal_size_bits() const {
  UWide total = 0;
  for (const auto& l : layers) total = saturating_add(total, l.nominal_size_bits());
  return total;
}

LayerPlan compile_dense(const DenseWeights& weights, const PartitionConfig& cfg, const Format& output_format,
                        const CompileOptions& options) {
  const std::size_t p = weights.p;
  const std::size_t q = weights.q;
  if (p == 0 || q == 0) throw CompileError("dense layer needs p, q > 0");
  if (weights.weights.size() != p * q) throw CompileError("dense weights are not p x q");
  if (!weights.bias.empty() && weights.bias.size() != p) throw CompileError("dense bias length is not p");
  validate(output_format);
  LayerPlan plan;
  plan.kind = LayerKind::dense;
  plan.warnings = cfg.validate(q);
  plan.input_format = cfg.input_format;
  plan.output_format = output_format;
  plan.input_shape = {q};
  plan.output_shape = {p};
  plan.cost_only = options.cost_only;

  const std::vector<float> w = checked(weights.weights, "dense weights");
  const std::vector<float> b = checked(weights.bias.empty() ? std::vector<float>(p, 0.0f) : weights.bias, "dense bias");

  DenseBody body;
  body.p = p;
  body.q = q;
  body.chunks = cfg.chunks;
  body.layout = make_layout(cfg.input_format, cfg.bit_mode, cfg.group, cfg.nonnegative_input);
  body.passes = magnitude_passes(body.layout, cfg.bit_mode);
  body.weight_exponent = weight_grid_exponent(w);
  body.acc_exponent = body.weight_exponent + quantum_exponent(cfg.input_format);
  body.bias_mode = options.bias;
  const DyadicWeights dw = snap_weights(w, body.weight_exponent);
  body.bias.resize(p);
  try {
    for (std::size_t j = 0; j < p; ++j) body.bias[j] = snap_to_grid(b[j], body.acc_exponent);
  } catch (const DomainError& e) {
    throw CompileError(std::string("bias does not fit the accumulator grid: ") + e.what());
  }

  const bool signed_fixed = is_fixed(cfg.input_format) && is_signed(cfg.input_format);
  if (options.bias == BiasMode::per_table && (body.passes.size() != 1 || signed_fixed))
    throw CompileError("per-table bias needs a single-pass layout (whole-word, unsigned or float input)");

  // Column-major copy so a chunk element's weights are contiguous.
  std::vector<std::int64_t> col(p * q);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < q; ++i) col[i * p + j] = dw.values[j * q + i];

  // Element width: every table of the layer shares the widest bound.
  const std::size_t k = cfg.chunks.size();
  std::vector<std::vector<Wide>> bias_parts(k, std::vector<Wide>(p, 0));
  if (options.bias == BiasMode::per_table) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto parts = split_exact(body.bias[j], k);
      for (std::size_t c = 0; c < k; ++c) bias_parts[c][j] = parts[c];
    }
  }
  // The MSB pass of a signed input reads a single bit per element.
  UWide value_max = is_fixed(cfg.input_format) && is_signed(cfg.input_format) ? 1 : 0;
  for (const auto& pass : body.passes) value_max = std::max(value_max, max_field_value(body.layout, pass));
  UWide entry_bound = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < p; ++j) {
      UWide s = wide_abs(bias_parts[c][j]);
      for (const auto i : cfg.chunks[c]) s += wide_abs(col[i * p + j]) * value_max;
      entry_bound = std::max(entry_bound, s);
    }
  }
  const unsigned element_bits = signed_width(entry_bound);
  if (element_bits > 127) throw CompileError("table entries need more than 127 bits");

  const UWide in_bound = input_bound(body.layout, body.passes);
  for (std::size_t j = 0; j < p; ++j) {
    UWide s = 0;
    for (std::size_t i = 0; i < q; ++i) s += wide_abs(col[i * p + j]);
    check_accumulator(wide_abs(body.bias[j]) + s * in_bound, "dense layer");
  }

  for (std::size_t c = 0; c < k; ++c) {
    const auto bits = static_cast<unsigned>(std::min<std::size_t>(cfg.chunks[c].size() * body.layout.element_bits, 4096));
    plan.bank.shapes.push_back(LutShape{bits, element_bits, {p}, true});
  }
  if (!options.cost_only) {
    // Field values per element slot (shared by every chunk).
    const unsigned eb = body.layout.element_bits;
    const PassSpec::Field kind = body.passes.empty() ? PassSpec::Field::planes : body.passes.front().field;
    for (std::size_t c = 0; c < k; ++c) {
      Lut lut(plan.bank.shapes[c], options.index_cap);
      const auto& chunk = cfg.chunks[c];
      fill_incremental(lut, bias_parts[c], eb, [&](unsigned slot, std::uint32_t field, std::span<Wide> entry) {
        const Wide v = field_value(field, body.layout, kind);
        if (v == 0) return;
        const std::int64_t* wc = col.data() + std::size_t{chunk[slot]} * p;
        for (std::size_t j = 0; j < p; ++j) entry[j] += static_cast<Wide>(wc[j]) * v;
      });
      plan.bank.tables.push_back(std::move(lut));
    }
  }
  build_schedule(plan, body.passes.size(), k);
  plan.body = std::move(body);
  if (signed_fixed) return compile_signed(std::move(plan), std::get<FixedFormat>(cfg.input_format).bits);
  return plan;
}

LayerPlan compile_signed(LayerPlan plan, unsigned n) {
  const auto* f = std::get_if<FixedFormat>(&plan.input_format);
  if (f == nullptr || !f->is_signed) throw ContractError("signed pass requested for an unsigned or float input plan");
  if (f->bits != n) throw ContractError("signed pass width " + std::to_string(n) + " does not match the " +
                                        std::to_string(f->bits) + "-bit input format");
  if (plan.kind != LayerKind::dense && plan.kind != LayerKind::conv2d)
    throw ContractError("signed pass applies to dense and conv2d plans only");
  auto add_pass = [&](std::vector<PassSpec>& passes, std::size_t chunks) {
    for (const auto& p : passes)
      if (p.field == PassSpec::Field::msb) return false;
    passes.push_back({PassSpec::Field::msb, n - 1, 1, n - 1, true});
    build_schedule(plan, passes.size(), chunks);
    return true;
  };
  if (auto* d = std::get_if<DenseBody>(&plan.body)) {
    add_pass(d->passes, d->chunks.size());
  } else if (auto* c = std::get_if<ConvBody>(&plan.body)) {
    if (add_pass(c->passes, c->in_channels * c->block_count())) {
      for (auto& id : plan.bank.logical) id = static_cast<std::uint32_t>(id / c->block_count());
    }
  }
  return plan;
}

LayerPlan compile_conv2d(const ConvWeights& weights, const ConvConfig& cfg, const Format& output_format,
                         const CompileOptions& options) {
  const std::size_t r = weights.radius;
  const std::size_t kd = 2 * r + 1;
  const std::size_t cin = weights.in_channels;
  const std::size_t cout = weights.out_channels;
  if (cfg.height == 0 || cfg.width == 0 || cin == 0 || cout == 0) throw CompileError("conv layer has an empty dimension");
  if (cfg.block == 0) throw CompileError("conv block size must be positive");
  if (weights.kernel.size() != kd * kd * cin * cout) throw CompileError("conv kernel size does not match (2r+1)^2 * C_in * C_out");
  if (!weights.bias.empty() && weights.bias.size() != cout) throw CompileError("conv bias length is not C_out");
  if (options.bias == BiasMode::per_table) throw CompileError("per-table bias is not supported for conv layers");
  validate(output_format);
  validate(cfg.input_format);
  const unsigned planes = magnitude_planes(cfg.input_format);
  if (cfg.bit_mode == BitMode::bitplane_group && planes == 0)
    throw CompileError("a 1-bit signed input has no planes to group");
  if (cfg.bit_mode == BitMode::bitplane_group && (cfg.group == 0 || planes % cfg.group != 0))
    throw CompileError("bitplane group of " + std::to_string(cfg.group) + " does not divide " + std::to_string(planes) +
                       " planes");

  const std::vector<float> kernel = checked(weights.kernel, "conv kernel");
  const std::vector<float> b = checked(weights.bias.empty() ? std::vector<float>(cout, 0.0f) : weights.bias, "conv bias");

  LayerPlan plan;
  plan.kind = LayerKind::conv2d;
  plan.input_format = cfg.input_format;
  plan.output_format = output_format;
  plan.input_shape = {cfg.height, cfg.width, cin};
  plan.output_shape = {cfg.height, cfg.width, cout};
  plan.cost_only = options.cost_only;

  ConvBody body;
  body.height = cfg.height;
  body.width = cfg.width;
  body.in_channels = cin;
  body.out_channels = cout;
  body.radius = r;
  body.block = cfg.block;
  body.blocks_y = (cfg.height + cfg.block - 1) / cfg.block;
  body.blocks_x = (cfg.width + cfg.block - 1) / cfg.block;
  body.layout = make_layout(cfg.input_format, cfg.bit_mode, cfg.group, cfg.nonnegative_input);
  body.passes = magnitude_passes(body.layout, cfg.bit_mode);
  body.weight_exponent = weight_grid_exponent(kernel);
  body.acc_exponent = body.weight_exponent + quantum_exponent(cfg.input_format);
  const DyadicWeights dk = snap_weights(kernel, body.weight_exponent);
  body.bias.resize(cout);
  try {
    for (std::size_t co = 0; co < cout; ++co) body.bias[co] = snap_to_grid(b[co], body.acc_exponent);
  } catch (const DomainError& e) {
    throw CompileError(std::string("bias does not fit the accumulator grid: ") + e.what());
  }
  if (body.block * body.block * body.layout.element_bits > 4096) throw CompileError("conv block index is too wide");

  // Kernel index [ky][kx][ci][co].
  auto kat = [&](std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
    return dk.values[((ky * kd + kx) * cin + ci) * cout + co];
  };
  // The MSB pass of a signed input reads a single bit per element.
  UWide value_max = is_fixed(cfg.input_format) && is_signed(cfg.input_format) ? 1 : 0;
  for (const auto& pass : body.passes) value_max = std::max(value_max, max_field_value(body.layout, pass));
  const UWide in_bound = input_bound(body.layout, body.passes);
  UWide entry_bound = 0;
  for (std::size_t co = 0; co < cout; ++co) {
    UWide all = 0;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      UWide s = 0;
      for (std::size_t ky = 0; ky < kd; ++ky)
        for (std::size_t kx = 0; kx < kd; ++kx) s += wide_abs(kat(ky, kx, ci, co));
      entry_bound = std::max(entry_bound, s * value_max);
      all += s;
    }
    check_accumulator(wide_abs(body.bias[co]) + all * in_bound, "conv layer");
  }
  const unsigned element_bits = signed_width(entry_bound);
  if (element_bits > 127) throw CompileError("table entries need more than 127 bits");

  const std::size_t m = body.block;
  const std::size_t h = body.halo();
  const auto index_bits = static_cast<unsigned>(m * m * body.layout.element_bits);
  for (std::size_t ci = 0; ci < cin; ++ci) plan.bank.shapes.push_back(LutShape{index_bits, element_bits, {h, h, cout}, true});
  if (!options.cost_only) {
    const PassSpec::Field kind = body.passes.empty() ? PassSpec::Field::planes : body.passes.front().field;
    const std::vector<Wide> zero(h * h * cout, 0);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      Lut lut(plan.bank.shapes[ci], options.index_cap);
      fill_incremental(lut, zero, body.layout.element_bits, [&](unsigned slot, std::uint32_t field, std::span<Wide> entry) {
        const Wide v = field_value(field, body.layout, kind);
        if (v == 0) return;
        const std::size_t dy = slot / m;
        const std::size_t dx = slot % m;
        // Output at halo (dy - ky + 2r, dx - kx + 2r) reads this pixel through tap (ky, kx).
        for (std::size_t ky = 0; ky < kd; ++ky)
          for (std::size_t kx = 0; kx < kd; ++kx) {
            Wide* e = entry.data() + ((dy + 2 * r - ky) * h + (dx + 2 * r - kx)) * cout;
            for (std::size_t co = 0; co < cout; ++co) e[co] += static_cast<Wide>(kat(ky, kx, ci, co)) * v;
          }
      });
      plan.bank.tables.push_back(std::move(lut));
    }
  }
  const std::size_t chunks = cin * body.block_count();
  build_schedule(plan, body.passes.size(), chunks);
  // Chunk (ci, block) reads the physical table of channel ci.
  for (auto& id : plan.bank.logical) id = static_cast<std::uint32_t>(id / body.block_count());
  const bool signed_fixed = is_fixed(cfg.input_format) && is_signed(cfg.input_format);
  plan.body = std::move(body);
  if (signed_fixed) return compile_signed(std::move(plan), std::get<FixedFormat>(cfg.input_format).bits);
  return plan;
}

std::function<double(double)> activation_function(const std::string& name) {
  if (name == "relu") return [](double x) { return x > 0 ? x : 0.0; };
  if (name == "sigmoid") return [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  if (name == "tanh") return [](double x) { return std::tanh(x); };
  if (name == "identity" || name == "none") return [](double x) { return x; };
  throw CompileError("unknown activation '" + name + "'");
}

LayerPlan compile_activation(ActivationKind kind, const std::string& function, const Format& input,
                             const Format& output, std::vector<std::size_t> shape, const CompileOptions& options) {
  validate(input);
  validate(output);
  LayerPlan plan;
  plan.kind = LayerKind::activation;
  plan.name = function;
  plan.input_format = input;
  plan.input_shape = shape;
  plan.output_shape = std::move(shape);
  plan.cost_only = options.cost_only;
  if (kind == ActivationKind::relu) {
    plan.output_format = input;
    plan.body = ActivationBody{ActivationKind::relu, "relu"};
    return plan;
  }
  plan.output_format = output;
  const auto fn = activation_function(function);
  const unsigned bits = width(input);
  plan.bank.shapes.push_back(LutShape{bits, width(output), {1}, false});
  plan.bank.logical.push_back(0);
  if (!options.cost_only) {
    plan.bank.tables.push_back(tabulate(
        [&](std::uint64_t code) {
          const auto c = static_cast<Code>(code);
          if (!is_finite(c, input)) return std::vector<double>{0.0};
          return std::vector<double>{fn(dequantize(c, input))};
        },
        bits, {1}, output, options.index_cap));
  }
  plan.schedule.push_back({StepOp::lookup_load, 0, 0, 0});
  plan.body = ActivationBody{ActivationKind::table, function};
  return plan;
}

LayerPlan compile_pool(std::vector<std::size_t> input_shape, std::size_t window, const Format& format) {
  if (input_shape.size() != 3) throw CompileError("max pooling needs a height x width x channels input");
  if (window == 0) throw CompileError("pool window must be positive");
  LayerPlan plan;
  plan.kind = LayerKind::pool;
  plan.name = "maxpool";
  plan.input_format = format;
  plan.output_format = format;
  plan.input_shape = input_shape;
  plan.output_shape = {input_shape[0] / window, input_shape[1] / window, input_shape[2]};
  if (plan.output_shape[0] == 0 || plan.output_shape[1] == 0) throw CompileError("pool window larger than its input");
  plan.body = PoolBody{input_shape[0], input_shape[1], input_shape[2], window};
  return plan;
}

LayerPlan compile_argmax(std::vector<std::size_t> input_shape, const Format& format) {
  if (element_count(input_shape) == 0) throw CompileError("argmax over an empty tensor");
  LayerPlan plan;
  plan.kind = LayerKind::argmax;
  plan.name = "argmax";
  plan.input_format = format;
  plan.output_format = FixedFormat{32, false, 0};
  plan.input_shape = std::move(input_shape);
  plan.output_shape = {1};
  plan.body = ArgmaxBody{};
  return plan;
}

LayerPlan compile_round(const RoundingTable& table, std::vector<std::size_t> shape) {
  if (table.length() == 0) throw ContractError("rounding table is empty");
  LayerPlan plan;
  plan.kind = LayerKind::round;
  plan.name = "stochastic-round";
  plan.input_format = table.input();
  plan.output_format = table.output();
  plan.input_shape = shape;
  plan.output_shape = std::move(shape);
  plan.bank.shapes.push_back(table.table().shape());
  plan.bank.tables.push_back(table.table());
  plan.bank.logical.push_back(0);
  plan.schedule.push_back({StepOp::lookup_load, 0, 0, 0});
  plan.body = RoundBody{table};
  return plan;
}

Format network_input_format(const WeightContainer& weights, const NetworkConfig& cfg) {
  if (cfg.input_format) return *cfg.input_format;
  if (const auto it = weights.metadata.find("input_format"); it != weights.metadata.end()) return parse_format(it->second);
  return FixedFormat{8, false, -8};
}

namespace {

std::vector<std::size_t> as_image(const std::vector<std::size_t>& shape, const std::string& layer) {
  if (shape.size() == 3) return shape;
  throw CompileError("layer '" + layer + "' needs a height x width x channels input");
}

struct Flow {
  Format format;
  std::vector<std::size_t> shape;
  bool nonnegative;
};

/// Appends the layers of one record, updating the flowing format/shape.
void emit_record(NetworkPlan& net, const LayerRecord& rec, const LayerConfig* lc, Flow& flow,
                 const CompileOptions& base) {
  CompileOptions opts = base;
  if (lc != nullptr) {
    opts.bias = lc->bias;
    opts.cost_only = base.cost_only || lc->cost_only;
  }
  auto add_activation = [&](const std::string& act) {
    if (act.empty() || act == "none" || act == "identity") return;
    if (act == "relu") {
      net.layers.push_back(compile_activation(ActivationKind::relu, "relu", flow.format, flow.format, flow.shape, opts));
      flow.nonnegative = true;
    } else {
      net.layers.push_back(compile_activation(ActivationKind::table, act, flow.format, flow.format, flow.shape, opts));
      flow.nonnegative = act == "sigmoid";
    }
    net.layers.back().name = rec.name + "." + act;
  };

  if (rec.kind == RecordKind::dense || rec.kind == RecordKind::conv2d) {
    const LayerConfig defaults;
    const LayerConfig& c = lc != nullptr ? *lc : defaults;
    Format in = flow.format;
    if (c.input_format) in = *c.input_format;
    else if (!rec.input_format.empty()) in = parse_format(rec.input_format);
    if (!(in == flow.format)) {
      // Requantize between the flowing format and this layer's input format.
      const auto* from = std::get_if<FixedFormat>(&flow.format);
      const auto* to = std::get_if<FixedFormat>(&in);
      if (c.rounding_length > 0 && from != nullptr && to != nullptr) {
        const RoundingTable table(*from, *to, xorshift_sequence(c.rounding_length, c.rounding_seed));
        net.layers.push_back(compile_round(table, flow.shape));
      } else {
        net.layers.push_back(compile_activation(ActivationKind::table, "identity", flow.format, in, flow.shape, opts));
      }
      net.layers.back().name = rec.name + ".requantize";
      flow.format = in;
    }
    const bool nonneg = c.nonnegative_input.value_or(flow.nonnegative || !is_signed(in));
    LayerPlan plan;
    if (rec.kind == RecordKind::dense) {
      DenseWeights dw{rec.shape.at(0), rec.shape.at(1), rec.weights, rec.bias};
      PartitionConfig pc;
      if (!c.chunks.empty()) {
        pc.chunks = c.chunks;
        pc.bit_mode = c.bit_mode;
        pc.group = c.group;
        pc.input_format = in;
      } else {
        pc = PartitionConfig::uniform(dw.q, c.chunk_size.value_or(1), c.bit_mode, in, c.group);
      }
      pc.nonnegative_input = nonneg;
      plan = compile_dense(dw, pc, c.output_format, opts);
      flow.shape = {dw.p};
    } else {
      const auto img = as_image(flow.shape, rec.name);
      ConvWeights cw{(rec.shape.at(0) - 1) / 2, rec.shape.at(2), rec.shape.at(3), rec.weights, rec.bias};
      ConvConfig cc{img[0], img[1], c.block, c.bit_mode, c.group, in, nonneg};
      plan = compile_conv2d(cw, cc, c.output_format, opts);
      flow.shape = plan.output_shape;
    }
    plan.name = rec.name;
    flow.format = c.output_format;
    flow.nonnegative = !is_signed(c.output_format);
    net.layers.push_back(std::move(plan));
    add_activation(rec.activation);
    return;
  }
  if (rec.kind == RecordKind::maxpool) {
    net.layers.push_back(compile_pool(as_image(flow.shape, rec.name), rec.shape.empty() ? 2 : rec.shape[0], flow.format));
    net.layers.back().name = rec.name;
    flow.shape = net.layers.back().output_shape;
    return;
  }
  net.layers.push_back(compile_argmax(flow.shape, flow.format));
  net.layers.back().name = rec.name;
  flow.format = net.layers.back().output_format;
  flow.shape = {1};
  flow.nonnegative = true;
}

}  // namespace

NetworkPlan compile_network(const WeightContainer& weights, const NetworkConfig& cfg) {
  weights.output_shapes();  // shape chain check, names both layers on mismatch
  const std::size_t affine = weights.affine_count();
  if (!cfg.layers.empty() && cfg.layers.size() != affine)
    throw CompileError("config has " + std::to_string(cfg.layers.size()) + " layer entries for " +
                       std::to_string(affine) + " dense/conv layers");

  auto build = [&](bool cost_only) {
    NetworkPlan net;
    net.name = weights.metadata.count("name") != 0 ? weights.metadata.at("name") : std::string("network");
    net.input_format = network_input_format(weights, cfg);
    net.input_shape = weights.input_shape;
    Flow flow{net.input_format, weights.input_shape, true};
    if (const auto it = weights.metadata.find("input_nonnegative"); it != weights.metadata.end())
      flow.nonnegative = it->second != "false" && it->second != "0";
    CompileOptions base;
    base.cost_only = cost_only;
    base.index_cap = cfg.index_cap;
    std::size_t a = 0;
    for (const auto& rec : weights.layers) {
      const bool is_affine = rec.kind == RecordKind::dense || rec.kind == RecordKind::conv2d;
      const LayerConfig* lc = nullptr;
      if (is_affine) lc = !cfg.layers.empty() ? &cfg.layers[a] : (cfg.defaults ? &*cfg.defaults : nullptr);
      emit_record(net, rec, lc, flow, base);
      if (is_affine) ++a;
    }
    return net;
  };

  NetworkPlan dry = build(true);
  if (cfg.cost_only) return dry;
  // Layers that stay cost-only by their own config do not count against the cap.
  UWide needed = 0;
  UWide nominal = 0;
  std::size_t a = 0;
  for (const auto& l : dry.layers) {
    const bool is_affine = l.kind == LayerKind::dense || l.kind == LayerKind::conv2d;
    const bool own = is_affine && (cfg.layers.empty() ? cfg.defaults && cfg.defaults->cost_only : cfg.layers[a].cost_only);
    if (is_affine) ++a;
    if (own) continue;
    needed = saturating_add(needed, l.bank.size_bits());
    nominal = saturating_add(nominal, l.nominal_size_bits());
  }
  const UWide cap = static_cast<UWide>(cfg.memory_cap_bytes) * 8;
  if (needed > cap) {
    std::ostringstream msg;
    msg << "plan tables need " << format_bits(nominal) << " at output-format entry width (" << format_bits(needed)
        << " with exact entries), over the " << format_bits(cap) << " memory cap; compile with cost-only";
    throw CapacityError(msg.str());
  }
  return build(false);
}

}  // namespace lutnet
