#include "cli/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "lutnet/compiler.hpp"
#include "lutnet/costs.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/errors.hpp"
#include "lutnet/modelio.hpp"
#include "lutnet/oracle.hpp"
#include "lutnet/trainer.hpp"

namespace lutnet::cli {

namespace {

namespace fs = std::filesystem;

/// Bad flag values that CLI11 cannot see (formats, modes).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Format format_flag(const std::string& text, const char* flag) {
  try {
    return parse_format(text);
  } catch (const DomainError& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

BitMode bit_mode_flag(const std::string& text) {
  try {
    return parse_bit_mode(text);
  } catch (const Error& e) {
    throw UsageError(std::string("--bit-mode: ") + e.what());
  }
}

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

// ---- network configuration flags --------------------------------------------

/// Every flag that shapes a NetworkConfig. Flags override the --config file;
/// per-layer flags apply to `defaults` and to every explicit layer entry.
struct ConfigFlags {
  std::string config_file;
  std::string input_format;
  std::size_t chunk_size = 0;
  std::string bit_mode;
  unsigned group = 0;
  std::string output_format;
  std::string bias;
  std::size_t block = 0;
  std::string nonnegative_input;
  std::size_t rounding_length = 0;
  std::uint64_t rounding_seed = 0;
  bool cost_only = false;
  unsigned index_cap = 0;
  std::uint64_t memory_cap = 0;

  std::vector<CLI::Option*> options;

  void attach(CLI::App& app) {
    auto add = [&](CLI::Option* o) { options.push_back(o); };
    add(app.add_option("--config", config_file, "network configuration JSON")->check(CLI::ExistingFile));
    add(app.add_option("--input-format", input_format, "network input format, e.g. u3@-3 or binary16"));
    add(app.add_option("--chunk-size", chunk_size, "elements per chunk")->check(CLI::PositiveNumber));
    add(app.add_option("--bit-mode", bit_mode, "whole-word | bitplane | bitplane-group"));
    add(app.add_option("--group", group, "planes per group in bitplane-group mode")->check(CLI::PositiveNumber));
    add(app.add_option("--output-format", output_format, "affine layer output format"));
    add(app.add_option("--bias", bias, "accumulator | per-table"));
    add(app.add_option("--block", block, "conv block size m")->check(CLI::PositiveNumber));
    add(app.add_option("--nonnegative-input", nonnegative_input, "true | false (default: inferred)")
            ->check(CLI::IsMember({"true", "false"})));
    add(app.add_option("--rounding-length", rounding_length, "R of the stochastic requantizer (0 = nearest)"));
    add(app.add_option("--rounding-seed", rounding_seed, "seed of the stochastic requantizer sequence"));
    add(app.add_flag("--cost-only", cost_only, "skip table materialization"));
    add(app.add_option("--index-cap", index_cap, "largest table index width in bits")->check(CLI::PositiveNumber));
    add(app.add_option("--memory-cap", memory_cap, "largest materialized plan in bytes")->check(CLI::PositiveNumber));
  }

  bool given(const char* name) const {
    for (const auto* o : options)
      if (o->check_name(name)) return o->count() > 0;
    return false;
  }

  void apply(LayerConfig& l) const {
    if (given("--chunk-size")) {
      l.chunk_size = chunk_size;
      l.chunks.clear();
    }
    if (given("--bit-mode")) l.bit_mode = bit_mode_flag(bit_mode);
    if (given("--group")) l.group = group;
    if (given("--output-format")) l.output_format = format_flag(output_format, "--output-format");
    if (given("--bias")) {
      if (bias == "accumulator") l.bias = BiasMode::accumulator;
      else if (bias == "per-table") l.bias = BiasMode::per_table;
      else throw UsageError("--bias must be accumulator or per-table");
    }
    if (given("--block")) l.block = block;
    if (given("--nonnegative-input")) l.nonnegative_input = nonnegative_input == "true";
    if (given("--rounding-length")) l.rounding_length = rounding_length;
    if (given("--rounding-seed")) l.rounding_seed = rounding_seed;
  }

  NetworkConfig resolve() const {
    NetworkConfig cfg;
    if (!config_file.empty()) cfg = parse_network_config(read_text(config_file));
    if (given("--input-format")) cfg.input_format = format_flag(input_format, "--input-format");
    if (given("--cost-only")) cfg.cost_only = cost_only;
    if (given("--index-cap")) cfg.index_cap = index_cap;
    if (given("--memory-cap")) cfg.memory_cap_bytes = memory_cap;
    const bool layer_flags = given("--chunk-size") || given("--bit-mode") || given("--group") ||
                             given("--output-format") || given("--bias") || given("--block") ||
                             given("--nonnegative-input") || given("--rounding-length") || given("--rounding-seed");
    if (layer_flags) {
      if (!cfg.defaults) cfg.defaults = LayerConfig{};
      apply(*cfg.defaults);
      for (auto& l : cfg.layers) apply(l);
    }
    return cfg;
  }
};

// ---- summaries ----------------------------------------------------------------

void plan_csv(const NetworkPlan& plan, std::ostream& out) {
  out << "layer,kind,input_format,output_format,physical_tables,logical_tables,nominal_lut_bits,nominal_lut_size,"
         "physical_lut_bits,lut_evals,shift_adds_c1,shift_adds_c2,compares,cost_only\n";
  UWide nominal = 0, physical = 0;
  std::size_t phys_tables = 0, logical_tables = 0;
  OpTally total;
  for (const auto& l : plan.layers) {
    const OpTally ops = scheduled_ops(l);
    total += ops;
    const UWide n = l.nominal_size_bits(), p = l.bank.size_bits();
    nominal = saturating_add(nominal, n);
    physical = saturating_add(physical, p);
    phys_tables += l.bank.shapes.size();
    logical_tables += l.bank.logical.size();
    out << l.name << ',' << to_string(l.kind) << ',' << to_string(l.input_format) << ','
        << to_string(l.output_format) << ',' << l.bank.shapes.size() << ',' << l.bank.logical.size() << ','
        << to_string(n) << ',' << format_bits(n) << ',' << to_string(p) << ',' << ops.lut_evals << ','
        << ops.shift_adds_c1 << ',' << ops.shift_adds_c2 << ',' << ops.compares << ','
        << (l.cost_only ? "true" : "false") << '\n';
  }
  out << "total,network," << to_string(plan.input_format) << ','
      << (plan.layers.empty() ? to_string(plan.input_format) : to_string(plan.layers.back().output_format)) << ','
      << phys_tables << ',' << logical_tables << ',' << to_string(nominal) << ',' << format_bits(nominal) << ','
      << to_string(physical) << ',' << total.lut_evals << ',' << total.shift_adds_c1 << ',' << total.shift_adds_c2
      << ',' << total.compares << ',' << (plan.cost_only() ? "true" : "false") << '\n';
}

void container_csv(const WeightContainer& c, std::ostream& out) {
  out << "layer,kind,shape,output_shape,activation,input_format,weights,bias\n";
  const auto shapes = c.output_shapes();
  auto dims = [](const std::vector<std::size_t>& s) {
    std::string t;
    for (std::size_t i = 0; i < s.size(); ++i) t += (i ? "x" : "") + std::to_string(s[i]);
    return t.empty() ? std::string("-") : t;
  };
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto& l = c.layers[i];
    out << l.name << ',' << to_string(l.kind) << ',' << dims(l.shape) << ',' << dims(shapes[i]) << ','
        << l.activation << ',' << (l.input_format.empty() ? "-" : l.input_format) << ',' << l.weights.size() << ','
        << l.bias.size() << '\n';
  }
}

// ---- input images ---------------------------------------------------------------

/// Binary PGM (P5, maxval 255), one image.
IdxDataset read_pgm(const fs::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw ParseError("truncated PGM header", start);
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw ParseError("not a binary PGM image", 0);
  IdxDataset d;
  try {
    d.cols = std::stoul(token());
    d.rows = std::stoul(token());
    if (std::stoul(token()) != 255) throw ParseError("PGM maxval must be 255", pos);
  } catch (const std::logic_error&) {
    throw ParseError("bad PGM header", pos);
  }
  ++pos;  // single whitespace before the raster
  if (data.size() < pos + d.rows * d.cols) throw ParseError("truncated PGM raster", data.size());
  d.count = 1;
  d.images.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                  data.begin() + static_cast<std::ptrdiff_t>(pos + d.rows * d.cols));
  return d;
}

IdxDataset read_images(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  char head[2] = {};
  f.read(head, 2);
  if (head[0] == 'P' && head[1] == '5') return read_pgm(path);
  f.seekg(0);
  return read_idx_images(f);
}

// ---- subcommands -----------------------------------------------------------------

struct TrainArgs {
  std::string dataset, out, data_dir;
  bool salvage = false;
  TrainConfig cfg;
};

IdxDataset load_split(const std::string& dataset, const std::string& split, const std::string& dir, bool salvage,
                      std::ostream& err) {
  IdxDataset d = load_dataset(dataset, split, dir.empty() ? std::nullopt : std::optional<fs::path>(dir),
                              IdxOptions{salvage});
  if (d.count != d.declared)
    err << "warning: " << dataset << ' ' << split << " images file is truncated; using " << d.count << " of "
        << d.declared << " declared images\n";
  return d;
}

int do_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto data = load_split(a.dataset, "train", a.data_dir, a.salvage, err);
  err << "training on " << data.count << " " << a.dataset << " images, " << a.cfg.bits << "-bit inputs, seed "
      << a.cfg.seed << '\n';
  const TrainResult r = train_linear(data, a.cfg);
  auto c = r.weights;
  c.metadata["dataset"] = a.dataset;
  save_container(c, fs::path(a.out));
  out << "dataset,bits,episodes,minibatch,learning_rate,seed,final_window_loss,out\n"
      << a.dataset << ',' << a.cfg.bits << ',' << a.cfg.episodes << ',' << a.cfg.minibatch << ','
      << a.cfg.learning_rate << ',' << a.cfg.seed << ',' << fixed3(r.window_losses.back()) << ',' << a.out << '\n';
  return kOk;
}

struct CompileArgs {
  std::string weights, out, emit_tables;
};

int do_compile(const CompileArgs& a, const ConfigFlags& flags, std::ostream& out, std::ostream& err) {
  const WeightContainer w = load_container(fs::path(a.weights));
  const NetworkConfig cfg = flags.resolve();
  const NetworkPlan plan = compile_network(w, cfg);
  for (const auto& l : plan.layers)
    for (const auto& warn : l.warnings) err << "warning: " << l.name << ": " << warn << '\n';
  if (!a.out.empty()) save_plan(plan, fs::path(a.out));
  if (!a.emit_tables.empty()) {
    if (plan.cost_only()) throw Error("--emit-tables needs materialized tables (drop --cost-only)");
    fs::create_directories(a.emit_tables);
    for (const auto& l : plan.layers)
      for (std::size_t t = 0; t < l.bank.tables.size(); ++t) {
        const fs::path p = fs::path(a.emit_tables) / (l.name + "." + std::to_string(t) + ".lut");
        std::ofstream f(p, std::ios::binary);
        if (!f) throw Error("cannot write " + p.string());
        l.bank.tables[t].save_image(f);
      }
  }
  plan_csv(plan, out);
  return kOk;
}

struct RunArgs {
  std::string plan, input;
  std::size_t index = 0, count = 1;
  bool trace_ops = false;
  std::uint64_t seed = 0;
};

int do_run(const RunArgs& a, std::ostream& out) {
  const NetworkPlan plan = load_plan(fs::path(a.plan));
  if (plan.cost_only()) throw RunError("plan was compiled cost-only and has no tables to run");
  const IdxDataset images = read_images(a.input);
  if (a.index >= images.count) throw RunError("--index is past the last image");
  const std::size_t end = a.count == 0 ? images.count : std::min(images.count, a.index + a.count);
  Engine engine(plan, a.seed);
  OpTally tally;
  std::vector<QuantizedTensor> outputs;
  for (std::size_t i = a.index; i < end; ++i) {
    engine.reset(a.seed);
    outputs.push_back(
        engine.run(image_tensor(images.image(i), images.pixels(), plan.input_shape, plan.input_format), &tally));
  }
  if (a.trace_ops) {
    out << "samples,seed,lut_evals,shift_adds_c1,shift_adds_c2,compares,multiplies\n"
        << outputs.size() << ',' << a.seed << ',' << tally.lut_evals << ',' << tally.shift_adds_c1 << ','
        << tally.shift_adds_c2 << ',' << tally.compares << ',' << tally.multiplies << '\n';
    return kOk;
  }
  const std::size_t width = outputs.front().codes.size();
  out << "sample,seed,prediction";
  for (std::size_t j = 0; j < width; ++j) out << ",output_" << j;
  out << '\n';
  for (std::size_t s = 0; s < outputs.size(); ++s) {
    const auto& y = outputs[s];
    out << a.index + s << ',' << a.seed << ',' << predicted_class(y);
    for (const Code c : y.codes) out << ',' << std::setprecision(9) << dequantize(c, y.format);
    out << '\n';
  }
  return kOk;
}

struct EvalArgs {
  std::string weights, spec, plan, dataset = "mnist", split = "test", via = "plan", data_dir;
  bool salvage = false;
  std::size_t limit = 0;
  std::uint64_t seed = 0;
};

int do_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto data = load_split(a.dataset, a.split, a.data_dir, a.salvage, err);
  std::optional<WeightContainer> w;
  if (!a.weights.empty()) w = load_container(fs::path(a.weights));
  const NetworkConfig cfg = a.spec.empty() ? NetworkConfig{} : parse_network_config(read_text(a.spec));
  if (!w && (a.via != "plan" || a.plan.empty())) throw UsageError("--weights is required unless --via plan --plan is given");

  std::vector<std::pair<std::string, Evaluation>> runs;
  if (a.via == "plan" || a.via == "both") {
    const NetworkPlan plan = a.plan.empty() ? compile_network(*w, cfg) : load_plan(fs::path(a.plan));
    runs.emplace_back("plan", evaluate_plan(plan, data, a.limit, a.seed));
  }
  if (a.via == "oracle" || a.via == "both")
    runs.emplace_back("oracle", evaluate_dataset(*w, QuantSpec::from_config(*w, cfg), data, a.limit, a.seed));

  std::string agreement;
  if (runs.size() == 2) {
    const auto& p = runs[0].second.predictions;
    const auto& o = runs[1].second.predictions;
    std::size_t same = 0;
    for (std::size_t i = 0; i < p.size(); ++i) same += p[i] == o[i] ? 1 : 0;
    agreement = fixed3(static_cast<double>(same) / static_cast<double>(p.size()));
    if (same != p.size()) err << "warning: engine and oracle disagree on " << p.size() - same << " samples\n";
  }
  const std::size_t classes = runs.front().second.classes;
  out << "via,dataset,split,seed,samples,correct,accuracy,agreement,label";
  for (std::size_t c = 0; c < classes; ++c) out << ",pred_" << c;
  out << '\n';
  for (const auto& [via, ev] : runs)
    for (std::size_t label = 0; label < classes; ++label) {
      out << via << ',' << a.dataset << ',' << a.split << ',' << a.seed << ',' << ev.samples << ',' << ev.correct
          << ',' << fixed3(ev.accuracy()) << ',' << agreement << ',' << label;
      for (std::size_t c = 0; c < classes; ++c) out << ',' << ev.confusion[label][c];
      out << '\n';
    }
  return kOk;
}

struct SweepArgs {
  std::string arch, weights, spec, grid = "default";
  std::vector<std::size_t> chunk_sizes, blocks;
  std::vector<std::string> bit_modes;
  unsigned group = 0, index_cap = 0;
};

int do_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.arch.empty() == a.weights.empty()) throw UsageError("give exactly one of --arch and --weights");
  Architecture arch;
  if (!a.arch.empty()) {
    try {
      arch = builtin_architecture(a.arch);
    } catch (const Error& e) {
      throw UsageError(std::string("--arch: ") + e.what());
    }
  } else {
    const NetworkConfig cfg = a.spec.empty() ? NetworkConfig{} : parse_network_config(read_text(a.spec));
    arch = architecture_from(load_container(fs::path(a.weights)), cfg);
  }
  if (a.grid != "default" && a.grid != "custom") throw UsageError("--grid must be default or custom");
  SweepGrid grid = a.grid == "default" ? default_grid(arch.name) : SweepGrid{};
  if (!a.chunk_sizes.empty()) grid.chunk_sizes = a.chunk_sizes;
  if (!a.blocks.empty()) grid.blocks = a.blocks;
  if (!a.bit_modes.empty()) {
    grid.bit_modes.clear();
    for (const auto& m : a.bit_modes) grid.bit_modes.push_back(bit_mode_flag(m));
  }
  if (a.group != 0) grid.group = a.group;
  if (a.index_cap != 0) grid.index_cap = a.index_cap;
  out << sweep_csv(sweep(arch, grid));
  return kOk;
}

struct InspectArgs {
  std::string plan, weights;
  bool show_config = false;
};

int do_inspect(const InspectArgs& a, const ConfigFlags& flags, std::ostream& out) {
  const int picked = (a.plan.empty() ? 0 : 1) + (a.weights.empty() ? 0 : 1) + (a.show_config ? 1 : 0);
  if (picked != 1) throw UsageError("give exactly one of --plan, --weights and --show-config");
  if (a.show_config) {
    out << to_json(flags.resolve()) << '\n';
  } else if (!a.plan.empty()) {
    plan_csv(load_plan(fs::path(a.plan)), out);
  } else {
    container_csv(load_container(fs::path(a.weights)), out);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LUT-based multiplierless inference: compile trained networks into lookup tables and run them", "lutnet"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the linear softmax classifier on quantized pixels");
  train_cmd->add_option("--dataset", train.dataset, "mnist | fashion")->required()->check(CLI::IsMember({"mnist", "fashion"}));
  train_cmd->add_option("--bits", train.cfg.bits, "input quantizer width")->check(CLI::Range(1, 16));
  train_cmd->add_option("--episodes", train.cfg.episodes, "minibatch updates")->check(CLI::PositiveNumber);
  train_cmd->add_option("--minibatch", train.cfg.minibatch, "samples per update")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train.cfg.learning_rate, "initial learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.cfg.seed, "shuffle seed");
  train_cmd->add_option("--out", train.out, "output weight container (.lnw)")->required();
  train_cmd->add_option("--data-dir", train.data_dir, "dataset root (default: $LUTNET_DATA_DIR)");
  train_cmd->add_flag("--salvage-truncated", train.salvage, "keep the complete records of a truncated images file");

  CompileArgs compile;
  ConfigFlags compile_flags;
  auto* compile_cmd = app.add_subcommand("compile", "compile a weight container into a LUT plan");
  compile_cmd->add_option("--weights", compile.weights, "weight container (.lnw)")->required()->check(CLI::ExistingFile);
  compile_cmd->add_option("--out", compile.out, "plan image to write (.lnp)");
  compile_cmd->add_option("--emit-tables", compile.emit_tables, "directory for LUT1 table images");
  compile_flags.attach(*compile_cmd);

  RunArgs runa;
  auto* run_cmd = app.add_subcommand("run", "run a compiled plan on images");
  run_cmd->add_option("--plan", runa.plan, "plan image (.lnp)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--input", runa.input, "IDX images file or binary PGM")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--index", runa.index, "first image");
  run_cmd->add_option("--count", runa.count, "images to run (0 = all)");
  run_cmd->add_flag("--trace-ops", runa.trace_ops, "print the operation tally instead of outputs");
  run_cmd->add_option("--seed", runa.seed, "stochastic-rounding counter start");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy and confusion counts on a labeled dataset");
  eval_cmd->add_option("--weights", eval.weights, "weight container (.lnw)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--spec", eval.spec, "network configuration JSON")->check(CLI::ExistingFile);
  eval_cmd->add_option("--plan", eval.plan, "precompiled plan for --via plan")->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", eval.dataset, "mnist | fashion")->check(CLI::IsMember({"mnist", "fashion"}));
  eval_cmd->add_option("--split", eval.split, "train | test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--via", eval.via, "oracle | plan | both")->check(CLI::IsMember({"oracle", "plan", "both"}));
  eval_cmd->add_option("--limit", eval.limit, "first N samples (0 = all)");
  eval_cmd->add_option("--seed", eval.seed, "stochastic-rounding counter start");
  eval_cmd->add_option("--data-dir", eval.data_dir, "dataset root (default: $LUTNET_DATA_DIR)");
  eval_cmd->add_flag("--salvage-truncated", eval.salvage, "keep the complete records of a truncated images file");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "LUT size / operation count over a configuration grid");
  sweep_cmd->add_option("--arch", sw.arch, "linear | mlp | lenet");
  sweep_cmd->add_option("--weights", sw.weights, "take the geometry from a container")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--spec", sw.spec, "network configuration JSON for --weights")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--grid", sw.grid, "default | custom");
  sweep_cmd->add_option("--chunk-sizes", sw.chunk_sizes, "dense chunk sizes")->delimiter(',');
  sweep_cmd->add_option("--bit-modes", sw.bit_modes, "bit modes")->delimiter(',');
  sweep_cmd->add_option("--blocks", sw.blocks, "conv block sizes")->delimiter(',');
  sweep_cmd->add_option("--group", sw.group, "planes per group");
  sweep_cmd->add_option("--index-cap", sw.index_cap, "index width cap for the materializable column");

  InspectArgs ins;
  ConfigFlags inspect_flags;
  auto* inspect_cmd = app.add_subcommand("inspect", "describe a plan or container, or print the effective configuration");
  inspect_cmd->add_option("--plan", ins.plan, "plan image (.lnp)")->check(CLI::ExistingFile);
  inspect_cmd->add_option("--weights", ins.weights, "weight container (.lnw)")->check(CLI::ExistingFile);
  inspect_cmd->add_flag("--show-config", ins.show_config, "print the configuration the flags resolve to");
  inspect_flags.attach(*inspect_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      err << app.help();
    } else {
      err << "error: " << e.what() << "\n";
      err << "run 'lutnet --help' for usage\n";
    }
    return kUsage;
  }

  try {
    if (train_cmd->parsed()) return do_train(train, out, err);
    if (compile_cmd->parsed()) return do_compile(compile, compile_flags, out, err);
    if (run_cmd->parsed()) return do_run(runa, out);
    if (eval_cmd->parsed()) return do_eval(eval, out, err);
    if (sweep_cmd->parsed()) return do_sweep(sw, out);
    if (inspect_cmd->parsed()) return do_inspect(ins, inspect_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n(use --cost-only for a size-only plan)\n";
    return kCapacity;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace lutnet::cli
