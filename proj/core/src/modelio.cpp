#include "lutnet/modelio.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "json.hpp"
#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

std::string read_all(std::istream& is) {
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return f;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

std::uint32_t get_be32(detail::Reader& r, const char* what) {
  unsigned char b[4];
  r.bytes(b, 4, what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

/// Verifies and strips the u64 FNV-1a trailer.
std::string checked_body(const std::string& file, const char* what) {
  if (file.size() < 8) throw ParseError(std::string(what) + " is too short for its checksum trailer", file.size());
  const std::size_t n = file.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t{static_cast<unsigned char>(file[n + i])} << (8 * i);
  if (detail::fnv1a64(file.data(), n) != stored) throw ChecksumError(std::string(what) + " checksum mismatch");
  return file.substr(0, n);
}

void append_trailer(std::string& body) {
  const std::uint64_t h = detail::fnv1a64(body.data(), body.size());
  for (int i = 0; i < 8; ++i) body.push_back(static_cast<char>((h >> (8 * i)) & 0xff));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- plan image helpers ---------------------------------------------------

void put_str(detail::Writer& w, const std::string& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  w.bytes(s.data(), s.size());
}

std::string get_str(detail::Reader& r, const char* what) {
  const auto n = r.get<std::uint32_t>(what);
  if (n > (1u << 24)) throw ParseError(std::string("implausible length for ") + what, r.offset());
  std::string s(n, '\0');
  r.bytes(s.data(), n, what);
  return s;
}

void put_shape(detail::Writer& w, const std::vector<std::size_t>& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  for (const auto d : s) w.put<std::uint64_t>(d);
}

std::vector<std::size_t> get_shape(detail::Reader& r) {
  const auto n = r.get<std::uint32_t>("shape rank");
  if (n > 8) throw ParseError("implausible shape rank", r.offset());
  std::vector<std::size_t> s(n);
  for (auto& d : s) d = r.get<std::uint64_t>("shape dim");
  return s;
}

void put_format(detail::Writer& w, const Format& f) { put_str(w, to_string(f)); }

Format get_format(detail::Reader& r) {
  const std::size_t at = r.offset();
  const std::string s = get_str(r, "format");
  try {
    return parse_format(s);
  } catch (const DomainError& e) {
    throw ParseError(std::string("bad format in plan: ") + e.what(), at);
  }
}

void put_wide(detail::Writer& w, Wide v) {
  const auto u = static_cast<UWide>(v);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(u));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(u >> 64));
}

Wide get_wide(detail::Reader& r) {
  const UWide lo = r.get<std::uint64_t>("wide low");
  const UWide hi = r.get<std::uint64_t>("wide high");
  return static_cast<Wide>(lo | (hi << 64));
}

template <class T, class Put>
void put_vec(detail::Writer& w, const std::vector<T>& v, Put put) {
  w.put<std::uint64_t>(v.size());
  for (const auto& x : v) put(x);
}

template <class T, class Get>
std::vector<T> get_vec(detail::Reader& r, Get get, std::size_t limit = std::size_t{1} << 32) {
  const auto n = r.get<std::uint64_t>("vector length");
  if (n > limit) throw ParseError("implausible vector length", r.offset());
  std::vector<T> v;
  v.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(get());
  return v;
}

void put_layout(detail::Writer& w, const IndexLayout& l) {
  put_format(w, l.input_format);
  w.put<std::uint32_t>(l.element_bits);
  w.put<std::uint32_t>(l.value_bits);
  w.put<std::uint8_t>(l.sign_in_index ? 1 : 0);
}

IndexLayout get_layout(detail::Reader& r) {
  IndexLayout l;
  l.input_format = get_format(r);
  l.element_bits = r.get<std::uint32_t>("element bits");
  l.value_bits = r.get<std::uint32_t>("value bits");
  l.sign_in_index = r.get<std::uint8_t>("sign flag") != 0;
  return l;
}

void put_passes(detail::Writer& w, const std::vector<PassSpec>& passes) {
  put_vec(w, passes, [&](const PassSpec& p) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.field));
    w.put<std::uint32_t>(p.low);
    w.put<std::uint32_t>(p.width);
    w.put<std::uint32_t>(p.shift);
    w.put<std::uint8_t>(p.subtract ? 1 : 0);
  });
}

std::vector<PassSpec> get_passes(detail::Reader& r) {
  return get_vec<PassSpec>(r, [&] {
    PassSpec p;
    const auto field = r.get<std::uint8_t>("pass field");
    if (field > 2) throw ParseError("bad pass field", r.offset());
    p.field = static_cast<PassSpec::Field>(field);
    p.low = r.get<std::uint32_t>("pass low");
    p.width = r.get<std::uint32_t>("pass width");
    p.shift = r.get<std::uint32_t>("pass shift");
    p.subtract = r.get<std::uint8_t>("pass subtract") != 0;
    return p;
  });
}

void put_body(detail::Writer& w, const LayerPlan& l) {
  std::visit(overloaded{[&](const DenseBody& b) {
                          w.put<std::uint64_t>(b.p);
                          w.put<std::uint64_t>(b.q);
                          put_vec(w, b.chunks, [&](const std::vector<std::uint32_t>& c) {
                            put_vec(w, c, [&](std::uint32_t e) { w.put<std::uint32_t>(e); });
                          });
                          put_layout(w, b.layout);
                          put_passes(w, b.passes);
                          put_vec(w, b.bias, [&](Wide v) { put_wide(w, v); });
                          w.put<std::int32_t>(b.acc_exponent);
                          w.put<std::int32_t>(b.weight_exponent);
                          w.put<std::uint8_t>(static_cast<std::uint8_t>(b.bias_mode));
                        },
                        [&](const ConvBody& b) {
                          for (const auto v : {b.height, b.width, b.in_channels, b.out_channels, b.radius, b.block,
                                               b.blocks_y, b.blocks_x})
                            w.put<std::uint64_t>(v);
                          put_layout(w, b.layout);
                          put_passes(w, b.passes);
                          put_vec(w, b.bias, [&](Wide v) { put_wide(w, v); });
                          w.put<std::int32_t>(b.acc_exponent);
                          w.put<std::int32_t>(b.weight_exponent);
                        },
                        [&](const ActivationBody& b) {
                          w.put<std::uint8_t>(static_cast<std::uint8_t>(b.kind));
                          put_str(w, b.function);
                        },
                        [&](const PoolBody& b) {
                          for (const auto v : {b.height, b.width, b.channels, b.window}) w.put<std::uint64_t>(v);
                        },
                        [&](const ArgmaxBody&) {},
                        [&](const RoundBody& b) {
                          put_format(w, b.table.input());
                          put_format(w, b.table.output());
                          put_vec(w, b.table.sequence(), [&](double x) {
                            std::uint64_t bits = 0;
                            std::memcpy(&bits, &x, sizeof bits);
                            w.put<std::uint64_t>(bits);
                          });
                        }},
             l.body);
}

void get_body(detail::Reader& r, LayerPlan& l) {
  switch (l.kind) {
    case LayerKind::dense: {
      DenseBody b;
      b.p = r.get<std::uint64_t>("p");
      b.q = r.get<std::uint64_t>("q");
      b.chunks = get_vec<std::vector<std::uint32_t>>(
          r, [&] { return get_vec<std::uint32_t>(r, [&] { return r.get<std::uint32_t>("chunk element"); }); });
      b.layout = get_layout(r);
      b.passes = get_passes(r);
      b.bias = get_vec<Wide>(r, [&] { return get_wide(r); });
      b.acc_exponent = r.get<std::int32_t>("acc exponent");
      b.weight_exponent = r.get<std::int32_t>("weight exponent");
      b.bias_mode = static_cast<BiasMode>(r.get<std::uint8_t>("bias mode") != 0);
      l.body = std::move(b);
      break;
    }
    case LayerKind::conv2d: {
      ConvBody b;
      for (auto* v : {&b.height, &b.width, &b.in_channels, &b.out_channels, &b.radius, &b.block, &b.blocks_y,
                      &b.blocks_x})
        *v = r.get<std::uint64_t>("conv geometry");
      b.layout = get_layout(r);
      b.passes = get_passes(r);
      b.bias = get_vec<Wide>(r, [&] { return get_wide(r); });
      b.acc_exponent = r.get<std::int32_t>("acc exponent");
      b.weight_exponent = r.get<std::int32_t>("weight exponent");
      l.body = std::move(b);
      break;
    }
    case LayerKind::activation: {
      ActivationBody b;
      b.kind = static_cast<ActivationKind>(r.get<std::uint8_t>("activation kind") != 0);
      b.function = get_str(r, "activation function");
      l.body = std::move(b);
      break;
    }
    case LayerKind::pool: {
      PoolBody b;
      for (auto* v : {&b.height, &b.width, &b.channels, &b.window}) *v = r.get<std::uint64_t>("pool geometry");
      l.body = b;
      break;
    }
    case LayerKind::argmax: l.body = ArgmaxBody{}; break;
    case LayerKind::round: {
      const std::size_t at = r.offset();
      const Format in = get_format(r);
      const Format out = get_format(r);
      auto seq = get_vec<double>(r, [&] {
        const auto bits = r.get<std::uint64_t>("sequence value");
        double x = 0;
        std::memcpy(&x, &bits, sizeof x);
        return x;
      });
      if (!is_fixed(in) || !is_fixed(out)) throw ParseError("rounding layer formats must be fixed point", at);
      try {
        l.body = RoundBody{RoundingTable(std::get<FixedFormat>(in), std::get<FixedFormat>(out), std::move(seq))};
      } catch (const Error& e) {
        throw ParseError(std::string("bad rounding layer: ") + e.what(), at);
      }
      break;
    }
  }
}

}  // namespace

// ---- model helpers -------------------------------------------------------

std::string to_string(RecordKind k) {
  switch (k) {
    case RecordKind::dense: return "dense";
    case RecordKind::conv2d: return "conv2d";
    case RecordKind::maxpool: return "maxpool";
    case RecordKind::argmax: return "argmax";
  }
  return "?";
}

RecordKind parse_record_kind(const std::string& s) {
  if (s == "dense") return RecordKind::dense;
  if (s == "conv2d") return RecordKind::conv2d;
  if (s == "maxpool") return RecordKind::maxpool;
  if (s == "argmax") return RecordKind::argmax;
  throw CompileError("unknown layer kind '" + s + "'");
}

std::vector<std::vector<std::size_t>> WeightContainer::output_shapes() const {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> shape = input_shape;
  std::string prev = "input";
  for (const auto& l : layers) {
    auto mismatch = [&](const std::string& why) {
      return CompileError("layer '" + l.name + "' cannot follow '" + prev + "' (output " + shape_string(shape) +
                          "): " + why);
    };
    switch (l.kind) {
      case RecordKind::dense: {
        if (l.shape.size() != 2) throw CompileError("dense layer '" + l.name + "' needs a {out, in} shape");
        if (l.weights.size() != l.shape[0] * l.shape[1])
          throw CompileError("dense layer '" + l.name + "' has " + std::to_string(l.weights.size()) + " weights");
        if (!l.bias.empty() && l.bias.size() != l.shape[0])
          throw CompileError("dense layer '" + l.name + "' bias length mismatch");
        if (element_count(shape) != l.shape[1])
          throw mismatch("expects " + std::to_string(l.shape[1]) + " inputs");
        shape = {l.shape[0]};
        break;
      }
      case RecordKind::conv2d: {
        if (l.shape.size() != 4 || l.shape[0] != l.shape[1] || l.shape[0] % 2 == 0)
          throw CompileError("conv layer '" + l.name + "' needs an odd square {k, k, in, out} kernel shape");
        if (l.weights.size() != element_count(l.shape))
          throw CompileError("conv layer '" + l.name + "' has " + std::to_string(l.weights.size()) + " weights");
        if (!l.bias.empty() && l.bias.size() != l.shape[3])
          throw CompileError("conv layer '" + l.name + "' bias length mismatch");
        if (shape.size() != 3 || shape[2] != l.shape[2])
          throw mismatch("expects a height x width x " + std::to_string(l.shape[2]) + " input");
        shape = {shape[0], shape[1], l.shape[3]};
        break;
      }
      case RecordKind::maxpool: {
        const std::size_t w = l.shape.empty() ? 2 : l.shape[0];
        if (shape.size() != 3 || w == 0 || shape[0] < w || shape[1] < w)
          throw mismatch("max pooling needs a height x width x channels input of at least the window size");
        shape = {shape[0] / w, shape[1] / w, shape[2]};
        break;
      }
      case RecordKind::argmax:
        if (element_count(shape) == 0) throw mismatch("argmax over an empty tensor");
        shape = {1};
        break;
    }
    out.push_back(shape);
    prev = l.name;
  }
  return out;
}

std::size_t WeightContainer::affine_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += (l.kind == RecordKind::dense || l.kind == RecordKind::conv2d) ? 1 : 0;
  return n;
}

std::size_t WeightContainer::payload_bytes() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += 4 * (l.weights.size() + l.bias.size());
  return n;
}

QuantizedTensor image_tensor(const std::uint8_t* pixels, std::size_t count, std::vector<std::size_t> shape,
                             const Format& format) {
  if (element_count(shape) != count)
    throw RunError("image of " + std::to_string(count) + " pixels does not fit shape " + shape_string(shape));
  // A 256-entry table of quantized pixel codes, built once per format.
  Code table[256];
  for (int v = 0; v < 256; ++v) table[v] = quantize(static_cast<double>(v) / 255.0, format);
  QuantizedTensor t;
  t.shape = std::move(shape);
  t.format = format;
  t.codes.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.codes[i] = table[pixels[i]];
  return t;
}

// ---- IDX ----------------------------------------------------------------

IdxDataset read_idx_images(std::istream& images, IdxOptions opt) {
  IdxDataset d;
  detail::Reader ri(images);
  const std::uint32_t magic = get_be32(ri, "images magic");
  if (magic != 0x00000803u) throw ParseError("bad IDX images magic", 0);
  const std::uint32_t count = get_be32(ri, "image count");
  d.rows = get_be32(ri, "rows");
  d.cols = get_be32(ri, "cols");
  if (d.rows == 0 || d.cols == 0 || d.rows > 4096 || d.cols > 4096) throw ParseError("implausible image size", 8);
  d.count = d.declared = count;
  // Grow as pixels arrive so a corrupt count cannot force a huge allocation.
  const std::size_t total = std::size_t{count} * d.rows * d.cols;
  constexpr std::size_t kStep = std::size_t{1} << 20;
  for (std::size_t done = 0; done < total;) {
    const std::size_t n = std::min(kStep, total - done);
    d.images.resize(done + n);
    try {
      ri.bytes(d.images.data() + done, n, "image pixels");
    } catch (const ParseError& e) {
      if (!opt.salvage_truncated) throw;
      d.count = (e.offset() - 16) / d.pixels();
      d.images.resize(d.count * d.pixels());
      return d;
    }
    done += n;
  }
  return d;
}

IdxDataset read_idx_images(const std::filesystem::path& images, IdxOptions opt) {
  auto f = open_in(images);
  return read_idx_images(f, opt);
}

IdxDataset read_idx(std::istream& images, std::istream& labels, IdxOptions opt) {
  IdxDataset d = read_idx_images(images, opt);
  detail::Reader rl(labels);
  if (get_be32(rl, "labels magic") != 0x00000801u) throw ParseError("bad IDX labels magic", 0);
  const std::uint32_t n = get_be32(rl, "label count");
  if (n != d.declared)
    throw ParseError("label count " + std::to_string(n) + " does not match image count " + std::to_string(d.declared),
                     4);
  d.labels.resize(d.count);
  rl.bytes(d.labels.data(), d.count, "labels");
  for (std::size_t i = 0; i < d.count; ++i)
    if (d.labels[i] > 9) throw ParseError("label out of range", 8 + i);
  return d;
}

IdxDataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels, IdxOptions opt) {
  auto fi = open_in(images);
  auto fl = open_in(labels);
  return read_idx(fi, fl, opt);
}

std::filesystem::path data_root(const std::optional<std::filesystem::path>& root) {
  if (root) return *root;
  if (const char* env = std::getenv("LUTNET_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw Error("dataset root not set: pass --data-dir or set LUTNET_DATA_DIR");
}

IdxDataset load_dataset(const std::string& name, const std::string& split,
                        const std::optional<std::filesystem::path>& root, IdxOptions opt) {
  if (name != "mnist" && name != "fashion") throw Error("unknown dataset '" + name + "' (expected mnist or fashion)");
  if (split != "train" && split != "test") throw Error("unknown split '" + split + "' (expected train or test)");
  const std::filesystem::path dir = data_root(root) / name;
  const std::string prefix = split == "train" ? "train" : "t10k";
  return read_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), opt);
}

// ---- LNW1 -----------------------------------------------------------------

void save_container(const WeightContainer& c, std::ostream& os) {
  c.output_shapes();
  using nlohmann::json;
  std::ostringstream payload_stream;
  detail::Writer pw(payload_stream);
  json layers = json::array();
  std::uint64_t offset = 0;
  for (const auto& l : c.layers) {
    json j;
    j["name"] = l.name;
    j["kind"] = to_string(l.kind);
    j["shape"] = l.shape;
    j["activation"] = l.activation;
    if (!l.input_format.empty()) j["input_format"] = l.input_format;
    j["weights"] = {offset, l.weights.size()};
    for (const float v : l.weights) pw.put_f32(v);
    offset += l.weights.size();
    j["bias"] = {offset, l.bias.size()};
    for (const float v : l.bias) pw.put_f32(v);
    offset += l.bias.size();
    layers.push_back(std::move(j));
  }
  const std::string payload = payload_stream.str();
  json manifest;
  manifest["format"] = "LNW1";
  manifest["version"] = kContainerVersion;
  manifest["input_shape"] = c.input_shape;
  manifest["metadata"] = c.metadata;
  manifest["layers"] = std::move(layers);
  manifest["payload_fnv1a"] = hex64(detail::fnv1a64(payload.data(), payload.size()));
  const std::string text = manifest.dump();

  std::ostringstream body_stream;
  detail::Writer w(body_stream);
  w.bytes("LNW1", 4);
  w.put<std::uint32_t>(kContainerVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  w.put<std::uint64_t>(payload.size());
  w.bytes(payload.data(), payload.size());
  std::string body = body_stream.str();
  append_trailer(body);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw Error("write failed");
}

void save_container(const WeightContainer& c, const std::filesystem::path& path) {
  auto f = open_out(path);
  save_container(c, f);
}

WeightContainer load_container(std::istream& is) {
  using nlohmann::json;
  const std::string file = read_all(is);
  if (file.size() < 4 || file.compare(0, 4, "LNW1") != 0) throw ParseError("not an LNW1 container (bad magic)", 0);
  const std::string body = checked_body(file, "container");
  std::istringstream bs(body);
  detail::Reader r(bs);
  char magic[4];
  r.bytes(magic, 4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kContainerVersion)
    throw ParseError("unknown container version " + std::to_string(version), 4);
  const auto manifest_len = r.get<std::uint32_t>("manifest length");
  if (manifest_len > body.size() - r.offset()) throw ParseError("manifest length exceeds the file", 8);
  std::string text(manifest_len, '\0');
  const std::size_t manifest_at = r.offset();
  r.bytes(text.data(), manifest_len, "manifest");
  const auto payload_len = r.get<std::uint64_t>("payload length");
  if (payload_len != body.size() - r.offset())
    throw ParseError("payload length does not match the file", r.offset() - 8);
  if (payload_len % 4 != 0) throw ParseError("payload is not a whole number of float32 values", r.offset() - 8);
  const std::string payload = body.substr(r.offset());

  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), manifest_at + e.byte);
  }
  WeightContainer c;
  try {
    if (m.at("version").get<std::uint32_t>() != version) throw ParseError("manifest version disagrees with header", manifest_at);
    if (m.at("payload_fnv1a").get<std::string>() != hex64(detail::fnv1a64(payload.data(), payload.size())))
      throw ChecksumError("container payload checksum mismatch");
    c.input_shape = m.at("input_shape").get<std::vector<std::size_t>>();
    if (m.contains("metadata")) c.metadata = m.at("metadata").get<std::map<std::string, std::string>>();
    const std::size_t floats = payload.size() / 4;
    auto read_floats = [&](const json& span, const std::string& name) {
      const auto off = span.at(0).get<std::uint64_t>();
      const auto n = span.at(1).get<std::uint64_t>();
      if (off > floats || n > floats - off)
        throw ParseError("tensor of layer '" + name + "' lies outside the payload", manifest_at);
      std::vector<float> v(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
          bits |= std::uint32_t{static_cast<unsigned char>(payload[4 * (off + i) + b])} << (8 * b);
        std::memcpy(&v[i], &bits, 4);
      }
      return v;
    };
    for (const auto& jl : m.at("layers")) {
      LayerRecord l;
      l.name = jl.at("name").get<std::string>();
      l.kind = parse_record_kind(jl.at("kind").get<std::string>());
      l.shape = jl.at("shape").get<std::vector<std::size_t>>();
      l.activation = jl.value("activation", std::string("none"));
      l.input_format = jl.value("input_format", std::string());
      l.weights = read_floats(jl.at("weights"), l.name);
      l.bias = read_floats(jl.at("bias"), l.name);
      c.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), manifest_at);
  } catch (const CompileError& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), manifest_at);
  }
  try {
    c.output_shapes();
  } catch (const CompileError& e) {
    throw ParseError(std::string("container layers do not chain: ") + e.what(), manifest_at);
  }
  return c;
}

WeightContainer load_container(const std::filesystem::path& path) {
  auto f = open_in(path);
  return load_container(f);
}

// ---- LNP1 -----------------------------------------------------------------

void save_plan(const NetworkPlan& plan, std::ostream& os) {
  std::ostringstream bs;
  detail::Writer w(bs);
  w.bytes("LNP1", 4);
  w.put<std::uint32_t>(kPlanVersion);
  put_str(w, plan.name);
  put_format(w, plan.input_format);
  put_shape(w, plan.input_shape);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(plan.layers.size()));
  for (const auto& l : plan.layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
    put_str(w, l.name);
    put_format(w, l.input_format);
    put_format(w, l.output_format);
    put_shape(w, l.input_shape);
    put_shape(w, l.output_shape);
    w.put<std::uint8_t>(l.cost_only ? 1 : 0);
    put_vec(w, l.warnings, [&](const std::string& s) { put_str(w, s); });
    put_vec(w, l.bank.shapes, [&](const LutShape& s) {
      w.put<std::uint32_t>(s.index_bits);
      w.put<std::uint32_t>(s.element_bits);
      w.put<std::uint8_t>(s.signed_elements ? 1 : 0);
      put_shape(w, s.entry_shape);
    });
    put_vec(w, l.bank.logical, [&](std::uint32_t id) { w.put<std::uint32_t>(id); });
    w.put<std::uint8_t>(l.bank.tables.empty() ? 0 : 1);
    if (!l.bank.tables.empty()) {
      std::ostringstream ts;
      for (const auto& t : l.bank.tables) t.save_image(ts);
      const std::string images = ts.str();
      w.put<std::uint64_t>(images.size());
      w.bytes(images.data(), images.size());
    }
    put_vec(w, l.schedule, [&](const Step& s) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(s.op));
      w.put<std::uint16_t>(s.pass);
      w.put<std::uint32_t>(s.table);
      w.put<std::uint32_t>(s.chunk);
    });
    put_body(w, l);
  }
  std::string body = bs.str();
  append_trailer(body);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw Error("write failed");
}

void save_plan(const NetworkPlan& plan, const std::filesystem::path& path) {
  auto f = open_out(path);
  save_plan(plan, f);
}

NetworkPlan load_plan(std::istream& is) {
  const std::string file = read_all(is);
  if (file.size() < 4 || file.compare(0, 4, "LNP1") != 0) throw ParseError("not an LNP1 plan (bad magic)", 0);
  const std::string body = checked_body(file, "plan");
  std::istringstream bs(body);
  detail::Reader r(bs);
  char magic[4];
  r.bytes(magic, 4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kPlanVersion) throw ParseError("unknown plan version " + std::to_string(version), 4);
  NetworkPlan plan;
  plan.name = get_str(r, "plan name");
  plan.input_format = get_format(r);
  plan.input_shape = get_shape(r);
  const auto n = r.get<std::uint32_t>("layer count");
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerPlan l;
    const auto kind = r.get<std::uint8_t>("layer kind");
    if (kind > static_cast<std::uint8_t>(LayerKind::round)) throw ParseError("bad layer kind", r.offset() - 1);
    l.kind = static_cast<LayerKind>(kind);
    l.name = get_str(r, "layer name");
    l.input_format = get_format(r);
    l.output_format = get_format(r);
    l.input_shape = get_shape(r);
    l.output_shape = get_shape(r);
    l.cost_only = r.get<std::uint8_t>("cost-only flag") != 0;
    l.warnings = get_vec<std::string>(r, [&] { return get_str(r, "warning"); });
    l.bank.shapes = get_vec<LutShape>(r, [&] {
      LutShape s;
      s.index_bits = r.get<std::uint32_t>("index bits");
      s.element_bits = r.get<std::uint32_t>("element bits");
      s.signed_elements = r.get<std::uint8_t>("signed flag") != 0;
      s.entry_shape = get_shape(r);
      return s;
    });
    l.bank.logical = get_vec<std::uint32_t>(r, [&] { return r.get<std::uint32_t>("logical id"); });
    for (const auto id : l.bank.logical)
      if (id >= l.bank.shapes.size()) throw ParseError("logical table id has no physical table", r.offset());
    if (r.get<std::uint8_t>("tables flag") != 0) {
      const auto len = r.get<std::uint64_t>("tables length");
      if (len > body.size() - r.offset()) throw ParseError("table images exceed the file", r.offset() - 8);
      const std::size_t at = r.offset();
      std::string images(len, '\0');
      r.bytes(images.data(), len, "table images");
      std::istringstream ts(images);
      for (std::size_t t = 0; t < l.bank.shapes.size(); ++t) {
        try {
          l.bank.tables.push_back(Lut::load_image(ts));
        } catch (const ParseError& e) {
          throw ParseError(std::string("bad table image: ") + e.what(), at + e.offset());
        }
        if (!(l.bank.tables.back().shape() == l.bank.shapes[t]))
          throw ParseError("table image does not match its declared shape", at);
      }
    }
    l.schedule = get_vec<Step>(r, [&] {
      Step s;
      const auto op = r.get<std::uint8_t>("step op");
      if (op > 2) throw ParseError("bad step op", r.offset() - 1);
      s.op = static_cast<StepOp>(op);
      s.pass = r.get<std::uint16_t>("step pass");
      s.table = r.get<std::uint32_t>("step table");
      s.chunk = r.get<std::uint32_t>("step chunk");
      return s;
    });
    get_body(r, l);
    plan.layers.push_back(std::move(l));
  }
  if (r.offset() != body.size()) throw ParseError("trailing bytes after the last layer", r.offset());
  return plan;
}

NetworkPlan load_plan(const std::filesystem::path& path) {
  auto f = open_in(path);
  return load_plan(f);
}

}  // namespace lutnet
