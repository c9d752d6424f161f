#pragma once

// File formats: IDX datasets, LNW1 weight containers and LNP1 plan images.
//
// LNW1 (little-endian):
//   "LNW1" | u32 version (1) | u32 manifest length | manifest (UTF-8 JSON)
//   | u64 payload length | payload (float32 tensors) | u64 FNV-1a of all preceding bytes
// The manifest lists each layer's name, kind, shape, activation, optional
// input format tag and the float offsets/counts of its weights and bias, plus
// the input shape, free-form metadata and the payload's FNV-1a checksum.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "lutnet/compiler.hpp"
#include "lutnet/model.hpp"

namespace lutnet {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kPlanVersion = 1;

struct IdxOptions {
  /// Keep the complete records of a truncated images file instead of
  /// throwing; labels are cut to match. Off by default: a short file is an error.
  bool salvage_truncated = false;
};

/// Big-endian IDX pair (images magic 0x00000803, labels 0x00000801).
/// Throws ParseError with the byte offset on bad magic or truncation.
IdxDataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels, IdxOptions opt = {});
IdxDataset read_idx(std::istream& images, std::istream& labels, IdxOptions opt = {});
/// Images file alone; the result has no labels.
IdxDataset read_idx_images(const std::filesystem::path& images, IdxOptions opt = {});
IdxDataset read_idx_images(std::istream& images, IdxOptions opt = {});

/// Dataset root: `root` if given, else $LUTNET_DATA_DIR. Throws Error when neither is set.
std::filesystem::path data_root(const std::optional<std::filesystem::path>& root = std::nullopt);
/// `name` is "mnist" or "fashion", `split` is "train" or "test"; files are
/// <root>/<name>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
IdxDataset load_dataset(const std::string& name, const std::string& split,
                        const std::optional<std::filesystem::path>& root = std::nullopt, IdxOptions opt = {});

void save_container(const WeightContainer& c, std::ostream& os);
void save_container(const WeightContainer& c, const std::filesystem::path& path);
/// Throws ChecksumError on a corrupted file, ParseError on a malformed or
/// unknown-version one.
WeightContainer load_container(std::istream& is);
WeightContainer load_container(const std::filesystem::path& path);

/// LNP1: "LNP1" | u32 version | plan body | u64 FNV-1a trailer.
void save_plan(const NetworkPlan& plan, std::ostream& os);
void save_plan(const NetworkPlan& plan, const std::filesystem::path& path);
NetworkPlan load_plan(std::istream& is);
NetworkPlan load_plan(const std::filesystem::path& path);

}  // namespace lutnet
