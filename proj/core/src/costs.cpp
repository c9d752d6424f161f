#include "lutnet/costs.hpp"

#include <algorithm>
#include <sstream>

#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

UWide table_bits(unsigned index_bits, std::uint64_t entry_elements, unsigned r_O) {
  if (index_bits >= 127) return ~UWide{0};
  return saturating_mul(saturating_mul(UWide{1} << index_bits, entry_elements), r_O);
}

void check_group(unsigned planes, BitMode mode, unsigned group) {
  if (mode == BitMode::bitplane_group && (group == 0 || planes % group != 0))
    throw CompileError("bitplane group of " + std::to_string(group) + " does not divide " + std::to_string(planes) +
                       " planes");
}

}  // namespace

CostReport& CostReport::operator+=(const CostReport& o) {
  total_lut_bits = saturating_add(total_lut_bits, o.total_lut_bits);
  physical_table_count += o.physical_table_count;
  logical_table_count += o.logical_table_count;
  lut_evals += o.lut_evals;
  shift_adds_c1 += o.shift_adds_c1;
  shift_adds_c2 += o.shift_adds_c2;
  reference_macs += o.reference_macs;
  input_bits += o.input_bits;
  max_index_bits = std::max(max_index_bits, o.max_index_bits);
  materializable = materializable && o.materializable;
  return *this;
}

ElementIndexing element_indexing(const Format& input, BitMode mode, unsigned group, bool nonnegative) {
  validate(input);
  const unsigned g = mode == BitMode::bitplane_group ? group : 1;
  if (const auto* f = std::get_if<FixedFormat>(&input)) {
    // Signed inputs index their n-1 magnitude bits; the MSB reuses the tables in one extra pass.
    const unsigned planes = f->is_signed ? f->bits - 1 : f->bits;
    const unsigned sign_pass = f->is_signed ? 1 : 0;
    if (planes == 0) {
      if (mode == BitMode::bitplane_group) throw CompileError("a 1-bit signed input has no planes to group");
      return {1, 1};
    }
    check_group(planes, mode, g);
    if (mode == BitMode::whole_word) return {planes, 1 + sign_pass};
    return {g, planes / g + sign_pass};
  }
  const auto& f = std::get<FloatFormat>(input);
  check_group(f.mantissa_bits, mode, g);
  const unsigned sign = f.has_sign && !nonnegative ? 1 : 0;
  if (mode == BitMode::whole_word) return {f.mantissa_bits - 1 + f.exponent_bits + sign, 1};
  return {g + f.exponent_bits + sign, f.mantissa_bits / g};
}

CostReport cost_dense(std::size_t p, std::size_t q, const Format& input, unsigned r_O, const DenseCostConfig& cfg) {
  std::size_t covered = 0;
  for (const auto m : cfg.chunk_sizes) covered += m;
  if (covered != q || std::count(cfg.chunk_sizes.begin(), cfg.chunk_sizes.end(), std::size_t{0}) != 0)
    throw CompileError("chunk sizes do not partition the " + std::to_string(q) + " inputs");
  const ElementIndexing ix = element_indexing(input, cfg.bit_mode, cfg.group, cfg.nonnegative_input);
  const std::uint64_t k = cfg.chunk_sizes.size();
  CostReport r;
  for (const auto m : cfg.chunk_sizes) {
    const std::uint64_t index = std::uint64_t{m} * ix.bits_per_element;
    const auto bits = static_cast<unsigned>(std::min<std::uint64_t>(index, 4096));
    r.total_lut_bits = saturating_add(r.total_lut_bits, table_bits(bits, p, r_O));
    r.max_index_bits = std::max(r.max_index_bits, bits);
  }
  r.physical_table_count = k;
  r.logical_table_count = k * ix.passes;
  r.lut_evals = k * ix.passes;
  r.shift_adds_c1 = ix.passes * (k - 1) * p;
  r.shift_adds_c2 = ix.passes * k * p;
  r.reference_macs = std::uint64_t{p} * q;
  r.input_bits = std::uint64_t{q} * width(input);
  r.materializable = r.max_index_bits <= cfg.index_cap;
  return r;
}

CostReport cost_conv(std::size_t radius, std::size_t in_channels, std::size_t out_channels, std::size_t height,
                     std::size_t width_px, const Format& input, unsigned r_O, const ConvCostConfig& cfg) {
  if (cfg.block == 0) throw CompileError("conv block size must be positive");
  const ElementIndexing ix = element_indexing(input, cfg.bit_mode, cfg.group, cfg.nonnegative_input);
  const std::uint64_t a = std::uint64_t{cfg.block} * cfg.block;
  const std::uint64_t side = cfg.block + 2 * radius;
  const std::uint64_t c = side * side;
  const std::uint64_t blocks = ((height + cfg.block - 1) / cfg.block) * ((width_px + cfg.block - 1) / cfg.block);
  const std::uint64_t lookups = in_channels * blocks;
  const std::uint64_t kernel = (2 * radius + 1) * (2 * radius + 1);
  CostReport r;
  const auto bits = static_cast<unsigned>(std::min<std::uint64_t>(a * ix.bits_per_element, 4096));
  r.total_lut_bits = saturating_mul(table_bits(bits, c * out_channels, r_O), in_channels);
  r.max_index_bits = bits;
  r.physical_table_count = in_channels;
  r.logical_table_count = ix.passes * lookups;
  r.lut_evals = ix.passes * lookups;
  r.shift_adds_c1 = ix.passes * (lookups - 1) * c * out_channels;
  r.shift_adds_c2 = r.shift_adds_c1 + ix.passes * std::uint64_t{height} * width_px * out_channels;
  r.reference_macs = std::uint64_t{height} * width_px * out_channels * kernel * in_channels;
  r.input_bits = std::uint64_t{height} * width_px * in_channels * width(input);
  r.materializable = bits <= cfg.index_cap;
  return r;
}

UWide cost_stochastic_rounder(std::uint64_t R, unsigned beta_in, unsigned beta_out) {
  return table_bits(beta_in, R, beta_out);
}

Architecture builtin_architecture(const std::string& name) {
  Architecture a;
  a.name = name;
  const Format half = FloatFormat::binary16();
  if (name == "linear") {
    a.layers.push_back({.name = "dense", .kind = RecordKind::dense, .p = 10, .q = 784,
                        .input_format = FixedFormat{3, false, -3}, .nonnegative_input = true});
  } else if (name == "mlp") {
    a.layers.push_back({.name = "dense1", .kind = RecordKind::dense, .p = 1024, .q = 784, .activation = "relu",
                        .input_format = FixedFormat{8, false, -8}, .nonnegative_input = true});
    a.layers.push_back({.name = "dense2", .kind = RecordKind::dense, .p = 512, .q = 1024, .activation = "relu",
                        .input_format = half, .nonnegative_input = true});
    a.layers.push_back({.name = "dense3", .kind = RecordKind::dense, .p = 10, .q = 512, .input_format = half,
                        .nonnegative_input = true});
  } else if (name == "lenet") {
    a.layers.push_back({.name = "conv1", .kind = RecordKind::conv2d, .radius = 2, .in_channels = 1, .out_channels = 32,
                        .height = 28, .width = 28, .activation = "relu", .input_format = half,
                        .nonnegative_input = true});
    a.layers.push_back({.name = "pool1", .kind = RecordKind::maxpool, .window = 2});
    a.layers.push_back({.name = "conv2", .kind = RecordKind::conv2d, .radius = 2, .in_channels = 32,
                        .out_channels = 64, .height = 14, .width = 14, .activation = "relu", .input_format = half,
                        .nonnegative_input = true});
    a.layers.push_back({.name = "pool2", .kind = RecordKind::maxpool, .window = 2});
    a.layers.push_back({.name = "dense1", .kind = RecordKind::dense, .p = 1024, .q = 3136, .activation = "relu",
                        .input_format = half, .nonnegative_input = true});
    a.layers.push_back({.name = "dense2", .kind = RecordKind::dense, .p = 10, .q = 1024, .input_format = half,
                        .nonnegative_input = true});
  } else {
    throw CompileError("unknown architecture '" + name + "' (expected linear, mlp or lenet)");
  }
  return a;
}

Architecture architecture_from(const WeightContainer& weights, const NetworkConfig& cfg) {
  NetworkConfig dry = cfg;
  dry.cost_only = true;
  const NetworkPlan plan = compile_network(weights, dry);
  Architecture a;
  a.name = plan.name;
  std::size_t rec = 0;
  auto next_record = [&](auto match) -> const LayerRecord& {
    while (rec < weights.layers.size() && !match(weights.layers[rec].kind)) ++rec;
    return weights.layers.at(rec++);
  };
  for (const auto& l : plan.layers) {
    ArchLayer al;
    al.input_format = l.input_format;
    if (const auto* d = std::get_if<DenseBody>(&l.body)) {
      const auto& r = next_record([](RecordKind k) { return k == RecordKind::dense || k == RecordKind::conv2d; });
      al.name = r.name;
      al.kind = RecordKind::dense;
      al.p = d->p;
      al.q = d->q;
      al.activation = r.activation;
      al.nonnegative_input = is_float(l.input_format) && !d->layout.sign_in_index;
      a.output_bits = width(l.output_format);
    } else if (const auto* c = std::get_if<ConvBody>(&l.body)) {
      const auto& r = next_record([](RecordKind k) { return k == RecordKind::dense || k == RecordKind::conv2d; });
      al.name = r.name;
      al.kind = RecordKind::conv2d;
      al.radius = c->radius;
      al.in_channels = c->in_channels;
      al.out_channels = c->out_channels;
      al.height = c->height;
      al.width = c->width;
      al.activation = r.activation;
      al.nonnegative_input = is_float(l.input_format) && !c->layout.sign_in_index;
      a.output_bits = width(l.output_format);
    } else if (const auto* pb = std::get_if<PoolBody>(&l.body)) {
      al.name = l.name;
      al.kind = RecordKind::maxpool;
      al.window = pb->window;
    } else {
      continue;
    }
    a.layers.push_back(std::move(al));
  }
  return a;
}

SweepGrid default_grid(const std::string& arch_name) {
  SweepGrid g;
  if (arch_name == "linear") {
    g.chunk_sizes = {1, 2, 4, 7, 14, 28};
    g.bit_modes = {BitMode::bitplane, BitMode::whole_word};
  } else if (arch_name == "mlp") {
    g.chunk_sizes = {1, 2, 4};
    g.bit_modes = {BitMode::whole_word, BitMode::bitplane};
  } else if (arch_name == "lenet") {
    g.chunk_sizes = {1, 2};
    g.bit_modes = {BitMode::bitplane, BitMode::whole_word};
    g.blocks = {1, 2};
  } else {
    g.chunk_sizes = {1, 2, 4, 8};
    g.bit_modes = {BitMode::bitplane, BitMode::whole_word};
  }
  return g;
}

std::string describe_chunks(const std::vector<std::size_t>& sizes) {
  std::ostringstream os;
  std::size_t i = 0;
  bool first = true;
  while (i < sizes.size()) {
    std::size_t j = i;
    while (j < sizes.size() && sizes[j] == sizes[i]) ++j;
    if (!first) os << '+';
    os << (j - i) << 'x' << sizes[i];
    first = false;
    i = j;
  }
  return os.str();
}

namespace {

std::vector<std::size_t> uniform_sizes(std::size_t q, std::size_t m) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < q; s += m) out.push_back(std::min(m, q - s));
  return out;
}

std::string chunk_label(const ArchLayer& l, std::size_t chunk, std::size_t block) {
  if (l.kind == RecordKind::conv2d) return "block" + std::to_string(block);
  return describe_chunks(uniform_sizes(l.q, std::min(chunk, l.q)));
}

}  // namespace

SweepPoint cost_network(const Architecture& arch, std::size_t chunk_size, BitMode mode, std::size_t block,
                        unsigned group, unsigned index_cap) {
  SweepPoint pt;
  pt.chunk_size = chunk_size;
  pt.bit_mode = mode;
  pt.block = block;
  for (const auto& l : arch.layers) {
    CostReport r;
    if (l.kind == RecordKind::dense) {
      DenseCostConfig dc{uniform_sizes(l.q, std::min(chunk_size, l.q)), mode, group, l.nonnegative_input, index_cap};
      r = cost_dense(l.p, l.q, l.input_format, arch.output_bits, dc);
    } else if (l.kind == RecordKind::conv2d) {
      ConvCostConfig cc{block, mode, group, l.nonnegative_input, index_cap};
      r = cost_conv(l.radius, l.in_channels, l.out_channels, l.height, l.width, l.input_format, arch.output_bits, cc);
    } else {
      continue;
    }
    pt.total += r;
    pt.layers.push_back({l.name, chunk_label(l, chunk_size, block), r});
  }
  return pt;
}

std::vector<SweepPoint> sweep(const Architecture& arch, const SweepGrid& grid) {
  if (grid.chunk_sizes.empty() || grid.bit_modes.empty() || grid.blocks.empty())
    throw CompileError("sweep grid is empty");
  const bool has_conv = std::any_of(arch.layers.begin(), arch.layers.end(),
                                    [](const ArchLayer& l) { return l.kind == RecordKind::conv2d; });
  const std::vector<std::size_t> blocks = has_conv ? grid.blocks : std::vector<std::size_t>{1};
  std::vector<SweepPoint> points;
  for (const auto mode : grid.bit_modes)
    for (const auto m : grid.chunk_sizes)
      for (const auto b : blocks) {
        SweepPoint pt = cost_network(arch, m, mode, b, grid.group, grid.index_cap);
        pt.config_id = points.size();
        points.push_back(std::move(pt));
      }
  for (auto& a : points) {
    for (const auto& b : points) {
      const bool le = b.total.total_lut_bits <= a.total.total_lut_bits && b.total.shift_adds_c1 <= a.total.shift_adds_c1;
      const bool lt = b.total.total_lut_bits < a.total.total_lut_bits || b.total.shift_adds_c1 < a.total.shift_adds_c1;
      if (le && lt) {
        a.dominated = true;
        break;
      }
    }
  }
  std::stable_sort(points.begin(), points.end(), [](const SweepPoint& x, const SweepPoint& y) {
    if (x.total.total_lut_bits != y.total.total_lut_bits) return x.total.total_lut_bits < y.total.total_lut_bits;
    return x.config_id < y.config_id;
  });
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "config_id,layer,chunk_sizes,bit_mode,total_lut_bits,lut_evals,shift_adds_c1,shift_adds_c2,reference_macs,"
        "materializable,dominated,total_lut_size\n";
  auto row = [&](const SweepPoint& pt, const std::string& layer, const std::string& chunks, const CostReport& r) {
    os << pt.config_id << ',' << layer << ',' << chunks << ',' << to_string(pt.bit_mode) << ','
       << to_string(r.total_lut_bits) << ',' << r.lut_evals << ',' << r.shift_adds_c1 << ',' << r.shift_adds_c2 << ','
       << r.reference_macs << ',' << (r.materializable ? "true" : "false") << ','
       << (pt.dominated ? "true" : "false") << ',' << format_bits(r.total_lut_bits) << '\n';
  };
  for (const auto& pt : points) {
    for (const auto& lc : pt.layers) row(pt, lc.layer, lc.chunks, lc.report);
    row(pt, "total", "-", pt.total);
  }
  return os.str();
}

}  // namespace lutnet
