#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cyto {

struct ManifestEntry {
  std::string image_path;                // relative to the data root
  std::optional<std::string> mask_path;  // relative to the data root
  int label = -1;
  std::string class_name;

  /// Image file stem, used as the record id in every output file.
  std::string id() const;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<int> labels() const;
};

/// Manifest JSON: an array of {"image_path", "mask_path"?, "label", "class_name"}.
/// Labels must lie in [0,5) and class names, when given, must match the
/// label's table entry. With a data root, every referenced file must exist.
Manifest parse_manifest(const std::string& json_text);
Manifest load_manifest(const std::filesystem::path& path, const std::optional<std::filesystem::path>& data_root = {});
std::string manifest_to_json(const Manifest& manifest);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct SplitSpec {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  uint64_t seed = 0;
};

void validate(const SplitSpec& spec);

struct DatasetSplit {
  std::vector<size_t> train, val, test;  // ascending indices
};

/// Stratified split: totals are floor(n*train), floor(n*val) and the
/// remainder; each class receives its proportional share (largest-remainder
/// rounding), members chosen by a seeded shuffle within the class.
DatasetSplit split_dataset(std::span<const int> labels, const SplitSpec& spec);
DatasetSplit split_dataset(const Manifest& manifest, const SplitSpec& spec);

std::string split_to_json(const DatasetSplit& split, const SplitSpec& spec);
DatasetSplit load_split(const std::filesystem::path& path);

/// Whole-file read/write helpers with I/O errors mapped to IoError.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cyto
