#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cyto/dataset.hpp"
#include "cyto/mrf_dcn.hpp"
#include "cyto/mtl_unet.hpp"

namespace cyto::pipeline {

enum class KeyKind { Int, Real, Text, Flag };

struct KeySpec {
  const char* name;
  const char* default_value;
  KeyKind kind;
  const char* help;
};

/// Every configuration key, in documentation order.
std::span<const KeySpec> config_keys();
const KeySpec* find_key(const std::string& name);

/// Stage names accepted by run_stage, in pipeline order.
std::span<const char* const> stage_names();

/// Flat key -> value settings. Values are validated against the key kind on
/// set; unset keys read as their default.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const { return values_.count(key) != 0; }
  /// "key = value" lines; '#' starts a comment. Apply a config file before
  /// command-line flags so that flags take precedence.
  void merge_file_text(const std::string& text);
  void load_file(const std::filesystem::path& path);

  std::string text(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key with its effective value.
  std::map<std::string, std::string> effective() const;

 private:
  std::map<std::string, std::string> values_;
};

struct StageResult {
  std::filesystem::path report_path;
  std::string report_json;
};

/// Runs one stage and writes its artifacts and report under `out`.
StageResult run_stage(const std::string& stage, const RunConfig& cfg);

// Building blocks shared by the stages and the tests.

/// Entry indices of `subset` ("all", "train", "val", "test") under the
/// seeded stratified split.
std::vector<size_t> select_subset(const Manifest& manifest, const std::string& subset, const SplitSpec& spec);

std::vector<MultiResSample> load_classifier_samples(const Manifest& manifest, const std::filesystem::path& root,
                                                    std::span<const size_t> indices);
/// Image resized to side x side; mask resized and re-thresholded at 0.5.
std::vector<MtlSample> load_mtl_samples(const Manifest& manifest, const std::filesystem::path& root,
                                        std::span<const size_t> indices, int side);

/// Mask probabilities at the source image size. Images larger than the patch
/// side are covered by the patch grid and overlapping predictions averaged.
struct SegmentResult {
  std::vector<float> mask_probs;  // height x width
  std::array<float, kNumClasses> class_probs{};
  int patches = 0;
  int kept_patches = 0;
};
SegmentResult segment_image(const MtlUnet& model, const FloatImage& image, int patch_side, int cols, int rows,
                            float threshold);

}  // namespace cyto::pipeline
