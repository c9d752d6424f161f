// JSON form of NetworkConfig (the plan configuration file).

#include <set>

#include "json.hpp"
#include "lutnet/compiler.hpp"
#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (known.count(key) == 0) throw ParseError("unknown key '" + key + "' in " + where, 0);
  }
}

Format format_field(const json& j, const char* key) {
  try {
    return parse_format(j.at(key).get<std::string>());
  } catch (const DomainError& e) {
    throw ParseError(std::string("bad format for '") + key + "': " + e.what(), 0);
  }
}

LayerConfig parse_layer(const json& j, const std::string& where) {
  static const std::set<std::string> kKeys = {"chunk_size", "chunks",     "bit_mode",          "group",
                                              "input_format", "output_format", "bias",       "cost_only",
                                              "block",      "nonnegative_input", "rounding_length", "rounding_seed"};
  if (!j.is_object()) throw ParseError(where + " must be an object", 0);
  reject_unknown(j, kKeys, where);
  LayerConfig c;
  if (j.contains("chunk_size")) c.chunk_size = j.at("chunk_size").get<std::size_t>();
  if (j.contains("chunks")) c.chunks = j.at("chunks").get<std::vector<std::vector<std::uint32_t>>>();
  if (j.contains("bit_mode")) c.bit_mode = parse_bit_mode(j.at("bit_mode").get<std::string>());
  if (j.contains("group")) c.group = j.at("group").get<unsigned>();
  if (j.contains("input_format")) c.input_format = format_field(j, "input_format");
  if (j.contains("output_format")) c.output_format = format_field(j, "output_format");
  if (j.contains("bias")) c.bias = parse_bias_mode(j.at("bias").get<std::string>());
  if (j.contains("cost_only")) c.cost_only = j.at("cost_only").get<bool>();
  if (j.contains("block")) c.block = j.at("block").get<std::size_t>();
  if (j.contains("nonnegative_input")) c.nonnegative_input = j.at("nonnegative_input").get<bool>();
  if (j.contains("rounding_length")) c.rounding_length = j.at("rounding_length").get<std::size_t>();
  if (j.contains("rounding_seed")) c.rounding_seed = j.at("rounding_seed").get<std::uint64_t>();
  return c;
}

json layer_json(const LayerConfig& c) {
  json j;
  if (c.chunk_size) j["chunk_size"] = *c.chunk_size;
  if (!c.chunks.empty()) j["chunks"] = c.chunks;
  j["bit_mode"] = to_string(c.bit_mode);
  j["group"] = c.group;
  if (c.input_format) j["input_format"] = to_string(*c.input_format);
  j["output_format"] = to_string(c.output_format);
  j["bias"] = to_string(c.bias);
  j["cost_only"] = c.cost_only;
  j["block"] = c.block;
  if (c.nonnegative_input) j["nonnegative_input"] = *c.nonnegative_input;
  j["rounding_length"] = c.rounding_length;
  j["rounding_seed"] = c.rounding_seed;
  return j;
}

}  // namespace

NetworkConfig parse_network_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object", 0);
  reject_unknown(j, {"input_format", "layers", "defaults", "cost_only", "index_cap", "memory_cap_bytes"}, "config");
  NetworkConfig cfg;
  try {
    if (j.contains("input_format")) cfg.input_format = format_field(j, "input_format");
    if (j.contains("cost_only")) cfg.cost_only = j.at("cost_only").get<bool>();
    if (j.contains("index_cap")) cfg.index_cap = j.at("index_cap").get<unsigned>();
    if (j.contains("memory_cap_bytes")) cfg.memory_cap_bytes = j.at("memory_cap_bytes").get<std::uint64_t>();
    if (j.contains("defaults")) cfg.defaults = parse_layer(j.at("defaults"), "defaults");
    if (j.contains("layers")) {
      const auto& layers = j.at("layers");
      if (!layers.is_array()) throw ParseError("'layers' must be an array", 0);
      for (std::size_t i = 0; i < layers.size(); ++i)
        cfg.layers.push_back(parse_layer(layers[i], "layers[" + std::to_string(i) + "]"));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad config value: ") + e.what(), 0);
  } catch (const CompileError& e) {
    throw ParseError(e.what(), 0);
  }
  return cfg;
}

std::string to_json(const NetworkConfig& cfg) {
  json j;
  if (cfg.input_format) j["input_format"] = to_string(*cfg.input_format);
  j["cost_only"] = cfg.cost_only;
  j["index_cap"] = cfg.index_cap;
  j["memory_cap_bytes"] = cfg.memory_cap_bytes;
  if (cfg.defaults) j["defaults"] = layer_json(*cfg.defaults);
  j["layers"] = json::array();
  for (const auto& l : cfg.layers) j["layers"].push_back(layer_json(l));
  return j.dump(2);
}

}  // namespace lutnet
