#include "cyto/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>

#include "cyto/classes.hpp"
#include "cyto/error.hpp"
#include "cyto/rng.hpp"

namespace cyto {

using nlohmann::json;

std::string ManifestEntry::id() const { return std::filesystem::path(image_path).stem().string(); }

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

Manifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest must be a JSON array of entries");
  Manifest m;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("image_path") || !item.contains("label")) {
      throw FormatError("manifest entry needs image_path and label");
    }
    ManifestEntry e;
    try {
      e.image_path = item.at("image_path").get<std::string>();
      e.label = item.at("label").get<int>();
      if (item.contains("mask_path") && !item.at("mask_path").is_null()) {
        e.mask_path = item.at("mask_path").get<std::string>();
      }
      if (item.contains("class_name")) e.class_name = item.at("class_name").get<std::string>();
    } catch (const json::exception& ex) {
      throw FormatError(std::string("malformed manifest entry: ") + ex.what());
    }
    if (e.label < 0 || e.label >= kNumClasses) {
      throw ValidationError("manifest label " + std::to_string(e.label) + " outside [0,5) for " + e.image_path);
    }
    if (e.class_name.empty()) {
      e.class_name = std::string(kClassNames[e.label]);
    } else if (e.class_name != kClassNames[e.label]) {
      throw ValidationError("class name '" + e.class_name + "' does not match label " + std::to_string(e.label));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, const std::optional<std::filesystem::path>& data_root) {
  Manifest m = parse_manifest(read_text(path));
  if (data_root) {
    for (const auto& e : m.entries) {
      if (!std::filesystem::exists(*data_root / e.image_path)) {
        throw IoError("manifest image missing: " + (*data_root / e.image_path).string());
      }
      if (e.mask_path && !std::filesystem::exists(*data_root / *e.mask_path)) {
        throw IoError("manifest mask missing: " + (*data_root / *e.mask_path).string());
      }
    }
  }
  return m;
}

std::string manifest_to_json(const Manifest& manifest) {
  json doc = json::array();
  for (const auto& e : manifest.entries) {
    json item = {{"image_path", e.image_path}, {"label", e.label}, {"class_name", e.class_name}};
    if (e.mask_path) item["mask_path"] = *e.mask_path;
    doc.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  write_text(path, manifest_to_json(manifest));
}

void validate(const SplitSpec& spec) {
  if (spec.train < 0.0 || spec.val < 0.0 || spec.test < 0.0) throw ValidationError("split ratios must be >= 0");
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
}

namespace {

// Splits `total` among classes proportionally to `share[c]`, never exceeding
// `capacity[c]`. Largest fractional part first; ties to the lower class.
std::vector<size_t> apportion(size_t total, const std::vector<double>& share, const std::vector<size_t>& capacity) {
  const size_t k = share.size();
  std::vector<size_t> out(k);
  size_t assigned = 0;
  for (size_t c = 0; c < k; ++c) {
    out[c] = std::min(capacity[c], static_cast<size_t>(std::floor(share[c] + 1e-9)));
    assigned += out[c];
  }
  std::vector<size_t> order(k);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return share[a] - std::floor(share[a] + 1e-9) > share[b] - std::floor(share[b] + 1e-9);
  });
  while (assigned < total) {
    bool progressed = false;
    for (size_t c : order) {
      if (assigned == total) break;
      if (out[c] < capacity[c]) {
        ++out[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return out;
}

}  // namespace

DatasetSplit split_dataset(std::span<const int> labels, const SplitSpec& spec) {
  validate(spec);
  if (labels.empty()) throw UsageError("cannot split an empty dataset");
  const size_t n = labels.size();
  const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * spec.train + 1e-9));
  const size_t n_val = std::min(n - n_train, static_cast<size_t>(std::floor(static_cast<double>(n) * spec.val + 1e-9)));

  std::map<int, std::vector<size_t>> members;
  for (size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  std::vector<std::vector<size_t>> groups;
  for (auto& [label, idx] : members) groups.push_back(std::move(idx));
  const size_t k = groups.size();

  std::vector<double> share(k);
  std::vector<size_t> capacity(k);
  for (size_t c = 0; c < k; ++c) {
    share[c] = static_cast<double>(groups[c].size()) * static_cast<double>(n_train) / static_cast<double>(n);
    capacity[c] = groups[c].size();
  }
  const std::vector<size_t> train_count = apportion(n_train, share, capacity);
  for (size_t c = 0; c < k; ++c) {
    share[c] = static_cast<double>(groups[c].size()) * static_cast<double>(n_val) / static_cast<double>(n);
    capacity[c] = groups[c].size() - train_count[c];
  }
  const std::vector<size_t> val_count = apportion(n_val, share, capacity);

  Rng rng(spec.seed);
  DatasetSplit split;
  for (size_t c = 0; c < k; ++c) {
    std::vector<size_t>& idx = groups[c];
    rng.shuffle(std::span<size_t>(idx));
    const size_t a = train_count[c], b = a + val_count[c];
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
    split.val.insert(split.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(a),
                     idx.begin() + static_cast<std::ptrdiff_t>(b));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

DatasetSplit split_dataset(const Manifest& manifest, const SplitSpec& spec) {
  const std::vector<int> labels = manifest.labels();
  return split_dataset(labels, spec);
}

std::string split_to_json(const DatasetSplit& split, const SplitSpec& spec) {
  json doc = {{"ratios", {spec.train, spec.val, spec.test}},
              {"seed", spec.seed},
              {"train", split.train},
              {"val", split.val},
              {"test", split.test}};
  return doc.dump(2) + "\n";
}

DatasetSplit load_split(const std::filesystem::path& path) {
  try {
    const json doc = json::parse(read_text(path));
    DatasetSplit s;
    s.train = doc.at("train").get<std::vector<size_t>>();
    s.val = doc.at("val").get<std::vector<size_t>>();
    s.test = doc.at("test").get<std::vector<size_t>>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError("malformed split file " + path.string() + ": " + e.what());
  }
}

}  // namespace cyto
