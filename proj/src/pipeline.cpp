#include "cyto/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "cyto/checkpoint.hpp"
#include "cyto/error.hpp"
#include "cyto/formats.hpp"
#include "cyto/metrics.hpp"
#include "cyto/risk.hpp"
#include "cyto/seg_post.hpp"
#include "cyto/synthetic.hpp"

namespace cyto::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr KeySpec kKeys[] = {
    {"data-root", ".", KeyKind::Text, "directory that manifest entries are relative to"},
    {"manifest", "manifest.json", KeyKind::Text, "dataset manifest (relative paths resolve under data-root)"},
    {"out", "out", KeyKind::Text, "output directory for artifacts and run reports"},
    {"seed", "7", KeyKind::Int, "seed for synthesis, splits, initialisation and batch order"},
    {"epochs", "50", KeyKind::Int, "training epochs"},
    {"batch-size", "32", KeyKind::Int, "mini-batch size"},
    {"lr", "0.001", KeyKind::Real, "Adam learning rate"},
    {"mtl-epochs", "30", KeyKind::Int, "UNet training epochs"},
    {"mtl-batch-size", "8", KeyKind::Int, "UNet mini-batch size"},
    {"mtl-lr", "0.0003", KeyKind::Real, "UNet Adam learning rate"},
    {"lambda-seg", "0.5", KeyKind::Real, "segmentation loss weight in [0,1]"},
    {"lambda-cls", "0.5", KeyKind::Real, "classification loss weight in [0,1]"},
    {"pad", "10", KeyKind::Int, "bounding-box padding offset in pixels"},
    {"binarize-threshold", "0.5", KeyKind::Real, "mask probability threshold in (0,1)"},
    {"cosine-threshold", "0.65", KeyKind::Real, "cosine similarity above which a class is flagged"},
    {"ridge", "1e-06", KeyKind::Real, "covariance ridge, scaled by trace/d"},
    {"priors", "equal", KeyKind::Text, "class priors for the risk posterior: equal | empirical"},
    {"k", "5", KeyKind::Int, "neighbours for the kNN feature check"},
    {"per-class", "100", KeyKind::Int, "synthetic images per class"},
    {"image-side", "128", KeyKind::Int, "synthetic image side in pixels"},
    {"input-side", "128", KeyKind::Int, "UNet input side, a multiple of 16"},
    {"split-train", "0.7", KeyKind::Real, "train fraction"},
    {"split-val", "0.15", KeyKind::Real, "validation fraction"},
    {"split-test", "0.15", KeyKind::Real, "test fraction"},
    {"subset", "all", KeyKind::Text, "manifest subset to process: all | train | val | test"},
    {"checkpoint", "", KeyKind::Text, "model checkpoint (default <out>/mrf_dcn.ckpt or <out>/mtl_unet.ckpt)"},
    {"features", "", KeyKind::Text, "feature JSONL (default <out>/features[_subset].jsonl)"},
    {"train-features", "", KeyKind::Text, "reference feature JSONL for the kNN check"},
    {"stats", "", KeyKind::Text, "risk statistics JSON (default <out>/risk_stats.json)"},
    {"predictions", "", KeyKind::Text, "prediction JSONL (default <out>/predictions[_subset].jsonl)"},
    {"masks", "", KeyKind::Text, "directory of <id>.png masks (bbox input, or predicted masks for eval)"},
    {"boxes", "", KeyKind::Text, "box JSONL; classify crops each image to its first box"},
    {"components", "false", KeyKind::Flag, "one box per 8-connected component instead of one per mask"},
    {"render", "false", KeyKind::Flag, "draw boxes onto copies of the source images"},
    {"thickness", "2", KeyKind::Int, "rendered box line thickness"},
    {"patch-side", "512", KeyKind::Int, "patch side for images larger than one patch"},
    {"grid-cols", "5", KeyKind::Int, "patch grid columns"},
    {"grid-rows", "4", KeyKind::Int, "patch grid rows"},
};

constexpr const char* kStages[] = {"synth",    "train-classifier", "train-mtl", "segment", "bbox",
                                   "classify", "extract-features", "fit-risk",  "risk",    "eval"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& v, int64_t& out) {
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_real(const std::string& v, double& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  out = std::strtod(v.c_str(), &end);
  return end == v.c_str() + v.size() && std::isfinite(out);
}

bool parse_flag(const std::string& v, bool& out) {
  static const char* yes[] = {"true", "1", "yes", "on"};
  static const char* no[] = {"false", "0", "no", "off"};
  for (const char* t : yes) {
    if (v == t) return out = true, true;
  }
  for (const char* f : no) {
    if (v == f) return out = false, true;
  }
  return false;
}

const KeySpec& require_key(const std::string& name) {
  const KeySpec* k = find_key(name);
  if (!k) throw UsageError("unknown configuration key '" + name + "'");
  return *k;
}

}  // namespace

std::span<const KeySpec> config_keys() { return kKeys; }

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::span<const char* const> stage_names() { return kStages; }

void RunConfig::set(const std::string& key, const std::string& raw) {
  const KeySpec& spec = require_key(key);
  const std::string value = trim(raw);
  int64_t i = 0;
  double r = 0.0;
  bool f = false;
  switch (spec.kind) {
    case KeyKind::Int:
      if (!parse_int(value, i)) throw ValidationError("'" + key + "' expects an integer, got '" + value + "'");
      break;
    case KeyKind::Real:
      if (!parse_real(value, r)) throw ValidationError("'" + key + "' expects a finite number, got '" + value + "'");
      break;
    case KeyKind::Flag:
      if (!parse_flag(value, f)) throw ValidationError("'" + key + "' expects true or false, got '" + value + "'");
      break;
    case KeyKind::Text:
      break;
  }
  values_[key] = value;
}

void RunConfig::merge_file_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  merge_file_text(read_text(path));
}

std::string RunConfig::text(const std::string& key) const {
  const KeySpec& spec = require_key(key);
  const auto it = values_.find(key);
  return it == values_.end() ? std::string(spec.default_value) : it->second;
}

int64_t RunConfig::integer(const std::string& key) const {
  int64_t v = 0;
  if (require_key(key).kind != KeyKind::Int || !parse_int(text(key), v)) {
    throw UsageError("'" + key + "' is not an integer key");
  }
  return v;
}

double RunConfig::real(const std::string& key) const {
  double v = 0.0;
  if (require_key(key).kind != KeyKind::Real || !parse_real(text(key), v)) {
    throw UsageError("'" + key + "' is not a numeric key");
  }
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  bool v = false;
  if (require_key(key).kind != KeyKind::Flag || !parse_flag(text(key), v)) {
    throw UsageError("'" + key + "' is not a flag key");
  }
  return v;
}

std::map<std::string, std::string> RunConfig::effective() const {
  std::map<std::string, std::string> out;
  for (const auto& k : kKeys) out[k.name] = text(k.name);
  return out;
}

// ---------------------------------------------------------------------------
// data helpers

std::vector<size_t> select_subset(const Manifest& manifest, const std::string& subset, const SplitSpec& spec) {
  if (subset == "all") {
    std::vector<size_t> all(manifest.entries.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (subset != "train" && subset != "val" && subset != "test") {
    throw ValidationError("subset must be all, train, val or test; got '" + subset + "'");
  }
  DatasetSplit split = split_dataset(manifest, spec);
  if (subset == "train") return split.train;
  if (subset == "val") return split.val;
  return split.test;
}

std::vector<MultiResSample> load_classifier_samples(const Manifest& manifest, const fs::path& root,
                                                    std::span<const size_t> indices) {
  std::vector<MultiResSample> out;
  out.reserve(indices.size());
  for (size_t i : indices) {
    const ManifestEntry& e = manifest.entries.at(i);
    out.push_back(make_multires_sample(decode_image(root / e.image_path), e.label));
  }
  return out;
}

namespace {

std::vector<float> resized_mask(const BinaryMask& mask, int side) {
  FloatImage m(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.bits.size(); ++i) m.data[i] = mask.bits[i] ? 1.0f : 0.0f;
  if (mask.width != side || mask.height != side) m = resize_bilinear(m, side, side);
  std::vector<float> out(m.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = m.data[i] >= 0.5f ? 1.0f : 0.0f;
  return out;
}

FloatImage crop_float(const FloatImage& img, int x, int y, int side) {
  FloatImage out(side, side, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    for (int r = 0; r < side; ++r) {
      for (int q = 0; q < side; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
    }
  }
  return out;
}

MtlUnet::Outputs predict_patch(const MtlUnet& model, const FloatImage& rgb) {
  const int s = model.input_side();
  const FloatImage in = (rgb.width == s && rgb.height == s) ? rgb : resize_bilinear(rgb, s, s);
  return model.predict(nn::Tensor({1, 3, s, s}, in.data));
}

FloatImage probs_as_image(const nn::Tensor& mask_probs, int side) {
  FloatImage m(side, side, 1);
  std::copy(mask_probs.data().begin(), mask_probs.data().end(), m.data.begin());
  return m;
}

}  // namespace

std::vector<MtlSample> load_mtl_samples(const Manifest& manifest, const fs::path& root,
                                        std::span<const size_t> indices, int side) {
  std::vector<MtlSample> out;
  out.reserve(indices.size());
  for (size_t i : indices) {
    const ManifestEntry& e = manifest.entries.at(i);
    if (!e.mask_path) throw ValidationError("entry '" + e.id() + "' has no mask_path; segmentation needs masks");
    FloatImage img = decode_image(root / e.image_path);
    if (img.width != side || img.height != side) img = resize_bilinear(img, side, side);
    MtlSample s;
    s.image = std::move(img.data);
    s.mask = resized_mask(mask_from_image(read_image(root / *e.mask_path)), side);
    s.label = e.label;
    out.push_back(std::move(s));
  }
  return out;
}

SegmentResult segment_image(const MtlUnet& model, const FloatImage& image, int patch_side, int cols, int rows,
                            float threshold) {
  if (image.channels != 3) throw DimensionError("segmentation expects an RGB image");
  const int w = image.width, h = image.height, s = model.input_side();
  SegmentResult r;
  if (std::max(w, h) <= patch_side) {
    MtlUnet::Outputs o = predict_patch(model, image);
    FloatImage p = probs_as_image(o.mask_probs, s);
    if (w != s || h != s) p = resize_bilinear(p, w, h);
    r.mask_probs = std::move(p.data);
    std::copy_n(o.class_probs.data().begin(), kNumClasses, r.class_probs.begin());
    r.patches = r.kept_patches = 1;
    return r;
  }

  const PatchGrid grid = make_patch_grid(w, h, patch_side, cols, rows);
  std::vector<float> sum(static_cast<size_t>(w) * h, 0.0f);
  std::vector<int> hits(sum.size(), 0);
  std::vector<BinaryMask> patch_masks;
  std::vector<std::array<float, kNumClasses>> patch_cls;
  for (const auto& [ax, ay] : grid.anchors) {
    MtlUnet::Outputs o = predict_patch(model, crop_float(image, ax, ay, patch_side));
    FloatImage p = probs_as_image(o.mask_probs, s);
    if (patch_side != s) p = resize_bilinear(p, patch_side, patch_side);
    for (int y = 0; y < patch_side; ++y) {
      for (int x = 0; x < patch_side; ++x) {
        const size_t at = static_cast<size_t>(ay + y) * w + (ax + x);
        sum[at] += p.at(0, y, x);
        ++hits[at];
      }
    }
    patch_masks.push_back(binarize(p.data, patch_side, patch_side, threshold));
    std::array<float, kNumClasses> cp{};
    std::copy_n(o.class_probs.data().begin(), kNumClasses, cp.begin());
    patch_cls.push_back(cp);
  }
  r.mask_probs.assign(sum.size(), 0.0f);
  for (size_t i = 0; i < sum.size(); ++i) {
    if (hits[i] > 0) r.mask_probs[i] = sum[i] / static_cast<float>(hits[i]);
  }
  std::vector<size_t> kept = filter_empty(patch_masks);
  r.patches = static_cast<int>(grid.anchors.size());
  r.kept_patches = static_cast<int>(kept.size());
  if (kept.empty()) {
    kept.resize(patch_cls.size());
    for (size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  }
  for (size_t i : kept) {
    for (int c = 0; c < kNumClasses; ++c) r.class_probs[c] += patch_cls[i][c] / static_cast<float>(kept.size());
  }
  return r;
}

// ---------------------------------------------------------------------------
// stages

namespace {

struct Context {
  const RunConfig& cfg;
  std::string stage;
  fs::path out;
  std::string suffix;  // "" or "_<subset>"
  json metrics = json::object();
  std::vector<std::string> artifacts;

  fs::path artifact(const std::string& name) {
    fs::path p = out / name;
    artifacts.push_back(p.string());
    return p;
  }
  void record(const fs::path& p) { artifacts.push_back(p.string()); }

  fs::path data_root() const { return fs::path(cfg.text("data-root")); }
  fs::path manifest_path() const {
    fs::path m = cfg.text("manifest");
    return m.is_absolute() ? m : data_root() / m;
  }
  Manifest manifest() const {
    const fs::path m = manifest_path();
    if (!fs::exists(m)) throw IoError("manifest not found: " + m.string());
    return load_manifest(m, data_root());
  }
  SplitSpec split_spec() const {
    SplitSpec s{cfg.real("split-train"), cfg.real("split-val"), cfg.real("split-test"), seed()};
    validate(s);
    return s;
  }
  uint64_t seed() const {
    const int64_t s = cfg.integer("seed");
    if (s < 0) throw ValidationError("seed must be >= 0");
    return static_cast<uint64_t>(s);
  }
  int positive(const std::string& key) const {
    const int64_t v = cfg.integer(key);
    if (v < 1 || v > 1'000'000'000) throw ValidationError("'" + key + "' must be a positive integer");
    return static_cast<int>(v);
  }
  std::vector<size_t> subset(const Manifest& m) const { return select_subset(m, cfg.text("subset"), split_spec()); }

  /// Path from `key`, or the default under the output directory.
  fs::path input(const std::string& key, const std::string& fallback) const {
    const std::string v = cfg.text(key);
    const fs::path p = v.empty() ? out / fallback : fs::path(v);
    if (!fs::exists(p)) throw IoError(key + " file not found: " + p.string());
    return p;
  }
};

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l;
  write_text(path, text);
}

json scores_json(const metrics::SegmentationScore& s) {
  return {{"iou", s.iou}, {"dice", s.dice}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tn", s.tn}};
}

double accuracy_of(std::span<const std::array<float, kNumClasses>> probs, std::span<const int> labels) {
  if (probs.empty()) return 0.0;
  size_t hit = 0;
  for (size_t i = 0; i < probs.size(); ++i) hit += argmax(probs[i]) == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(probs.size());
}

std::vector<int> labels_of(std::span<const MultiResSample> s) {
  std::vector<int> out;
  for (const auto& x : s) out.push_back(x.label);
  return out;
}


nn::AdamConfig adam_config(const Context& ctx, const char* key) {
  nn::AdamConfig a;
  a.lr = ctx.cfg.real(key);
  if (!(a.lr > 0.0)) throw ValidationError(std::string(key) + " must be positive");
  return a;
}

// Batch order gets its own stream so that it is independent of the weights.
Rng order_stream(uint64_t seed) { return Rng(seed).fork(); }

void stage_synth(Context& ctx) {
  SyntheticCellConfig sc;
  sc.per_class = ctx.positive("per-class");
  sc.image_side = ctx.positive("image-side");
  sc.seed = ctx.seed();
  const SyntheticDataset data = generate_synthetic(sc);
  const Manifest m = write_synthetic(data, ctx.out);
  for (const auto& e : m.entries) {
    ctx.record(ctx.out / e.image_path);
    ctx.record(ctx.out / *e.mask_path);
  }
  ctx.record(ctx.out / "manifest.json");
  const SplitSpec spec = ctx.split_spec();
  const DatasetSplit split = split_dataset(m, spec);
  write_text(ctx.artifact("split.json"), split_to_json(split, spec));

  // Discriminability of the generator's own per-image statistics.
  std::vector<risk::LabeledVector> train, test;
  for (size_t i : split.train) train.push_back({"", data.labels[i], cell_statistics(data.images[i], data.masks[i])});
  for (size_t i : split.test) test.push_back({"", data.labels[i], cell_statistics(data.images[i], data.masks[i])});
  ctx.metrics["images"] = data.images.size();
  ctx.metrics["train"] = split.train.size();
  ctx.metrics["val"] = split.val.size();
  ctx.metrics["test"] = split.test.size();
  if (!train.empty() && !test.empty() && train.size() >= 3) {
    ctx.metrics["statistics_knn3_accuracy"] = risk::knn_feature_eval(train, test, 3, kNumClasses).accuracy;
  }
}

void stage_train_classifier(Context& ctx) {
  const Manifest m = ctx.manifest();
  const DatasetSplit split = split_dataset(m, ctx.split_spec());
  const fs::path root = ctx.data_root();
  const std::vector<MultiResSample> train = load_classifier_samples(m, root, split.train);
  const std::vector<MultiResSample> val = load_classifier_samples(m, root, split.val);
  const std::vector<MultiResSample> test = load_classifier_samples(m, root, split.test);
  if (train.empty()) throw UsageError("training split is empty");

  const int epochs = ctx.positive("epochs");
  const int batch = ctx.positive("batch-size");
  MrfDcn model(ctx.seed());
  nn::Adam opt(model.parameters(), adam_config(ctx, "lr"));
  Rng order = order_stream(ctx.seed());
  json log = json::array();
  EpochReport last;
  for (int e = 1; e <= epochs; ++e) {
    last = train_epoch(model, train, opt, batch, order);
    log.push_back({{"epoch", e}, {"loss", last.mean_loss}, {"accuracy", last.accuracy}, {"steps", last.steps}});
  }
  const std::string ck = ctx.cfg.text("checkpoint");
  const fs::path ckpt = ck.empty() ? ctx.out / "mrf_dcn.ckpt" : fs::path(ck);
  save_checkpoint(ckpt, model);
  ctx.record(ckpt);
  write_text(ctx.artifact("training_log.json"), log.dump(2) + "\n");

  ctx.metrics["parameters"] = count_parameters(model);
  ctx.metrics["epochs"] = epochs;
  ctx.metrics["final_loss"] = last.mean_loss;
  ctx.metrics["final_epoch_accuracy"] = last.accuracy;
  ctx.metrics["train_accuracy"] = accuracy_of(predict_all(model, train), labels_of(train));
  if (!val.empty()) ctx.metrics["val_accuracy"] = accuracy_of(predict_all(model, val), labels_of(val));
  if (!test.empty()) ctx.metrics["test_accuracy"] = accuracy_of(predict_all(model, test), labels_of(test));
}

struct MtlScores {
  metrics::SegmentationScore pooled;
  double mean_iou = 0.0;
  double accuracy = 0.0;
};

MtlScores score_mtl(const MtlUnet& model, std::span<const MtlSample> data, float threshold) {
  MtlScores s;
  if (data.empty()) return s;
  const int side = model.input_side();
  const std::vector<MtlPrediction> preds = predict_all(model, data);
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  size_t hit = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const BinaryMask p = binarize(preds[i].mask_probs, side, side, threshold);
    const BinaryMask g = binarize(data[i].mask, side, side, 0.5f);
    const metrics::SegmentationScore one = metrics::segmentation_score(p, g);
    tp += one.tp, fp += one.fp, fn += one.fn, tn += one.tn;
    s.mean_iou += one.iou;
    hit += argmax(preds[i].class_probs) == data[i].label ? 1 : 0;
  }
  s.pooled = metrics::score_from_counts(tp, fp, fn, tn);
  s.mean_iou /= static_cast<double>(data.size());
  s.accuracy = static_cast<double>(hit) / static_cast<double>(data.size());
  return s;
}

json mtl_scores_json(const MtlScores& s) {
  return {{"iou", s.pooled.iou}, {"dice", s.pooled.dice}, {"mean_image_iou", s.mean_iou}, {"accuracy", s.accuracy}};
}

void stage_train_mtl(Context& ctx) {
  const Manifest m = ctx.manifest();
  const DatasetSplit split = split_dataset(m, ctx.split_spec());
  const int side = ctx.positive("input-side");
  MtlUnet model(ctx.seed(), side);
  const std::vector<MtlSample> train = load_mtl_samples(m, ctx.data_root(), split.train, side);
  const std::vector<MtlSample> val = load_mtl_samples(m, ctx.data_root(), split.val, side);
  if (train.empty()) throw UsageError("training split is empty");
  LossWeights w{static_cast<float>(ctx.cfg.real("lambda-seg")), static_cast<float>(ctx.cfg.real("lambda-cls"))};
  validate(w);
  const float threshold = static_cast<float>(ctx.cfg.real("binarize-threshold"));
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ValidationError("binarize-threshold must lie in (0,1)");

  const int epochs = ctx.positive("mtl-epochs");
  const int batch = ctx.positive("mtl-batch-size");
  nn::Adam opt(model.parameters(), adam_config(ctx, "mtl-lr"));
  Rng order = order_stream(ctx.seed());
  json log = json::array();
  MtlEpochReport last;
  for (int e = 1; e <= epochs; ++e) {
    last = train_mtl_epoch(model, train, opt, batch, w, order);
    log.push_back({{"epoch", e}, {"loss", last.mean_loss}, {"steps", last.steps}});
  }
  const std::string ck = ctx.cfg.text("checkpoint");
  const fs::path ckpt = ck.empty() ? ctx.out / "mtl_unet.ckpt" : fs::path(ck);
  save_checkpoint(ckpt, model);
  ctx.record(ckpt);
  write_text(ctx.artifact("mtl_training_log.json"), log.dump(2) + "\n");

  ctx.metrics["epochs"] = epochs;
  ctx.metrics["final_loss"] = last.mean_loss;
  ctx.metrics["train"] = mtl_scores_json(score_mtl(model, train, threshold));
  if (!val.empty()) ctx.metrics["val"] = mtl_scores_json(score_mtl(model, val, threshold));
}

fs::path checkpoint_input(const Context& ctx, const char* fallback) { return ctx.input("checkpoint", fallback); }

void stage_segment(Context& ctx) {
  const Manifest m = ctx.manifest();
  const MtlUnet model = load_mtl_unet(checkpoint_input(ctx, "mtl_unet.ckpt"));
  const float threshold = static_cast<float>(ctx.cfg.real("binarize-threshold"));
  const int patch = ctx.positive("patch-side");
  const int cols = ctx.positive("grid-cols"), rows = ctx.positive("grid-rows");
  std::vector<std::string> lines;
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  size_t with_gt = 0, hit = 0, patches = 0, kept = 0;
  const std::vector<size_t> idx = ctx.subset(m);
  for (size_t i : idx) {
    const ManifestEntry& e = m.entries[i];
    const FloatImage img = decode_image(ctx.data_root() / e.image_path);
    const SegmentResult r = segment_image(model, img, patch, cols, rows, threshold);
    const BinaryMask mask = binarize(r.mask_probs, img.width, img.height, threshold);
    write_image(ctx.artifact("pred_masks/" + e.id() + ".png"), mask_to_image(mask));
    formats::PredictionRecord p{e.id(), e.label, argmax(r.class_probs), r.class_probs};
    lines.push_back(formats::prediction_line(p));
    hit += p.predicted == e.label ? 1 : 0;
    patches += static_cast<size_t>(r.patches);
    kept += static_cast<size_t>(r.kept_patches);
    if (e.mask_path) {
      const BinaryMask gt = mask_from_image(read_image(ctx.data_root() / *e.mask_path));
      if (gt.width == mask.width && gt.height == mask.height) {
        const auto s = metrics::segmentation_score(mask, gt);
        tp += s.tp, fp += s.fp, fn += s.fn, tn += s.tn;
        ++with_gt;
      }
    }
  }
  write_lines(ctx.artifact("mtl_predictions" + ctx.suffix + ".jsonl"), lines);
  ctx.metrics["images"] = idx.size();
  ctx.metrics["patches"] = patches;
  ctx.metrics["kept_patches"] = kept;
  if (!idx.empty()) ctx.metrics["accuracy"] = static_cast<double>(hit) / static_cast<double>(idx.size());
  if (with_gt > 0) ctx.metrics["segmentation"] = scores_json(metrics::score_from_counts(tp, fp, fn, tn));
}

void stage_bbox(Context& ctx) {
  const Manifest m = ctx.manifest();
  const int pad = static_cast<int>(ctx.cfg.integer("pad"));
  const bool components = ctx.cfg.flag("components");
  const bool render = ctx.cfg.flag("render");
  const int thickness = ctx.positive("thickness");
  const std::string mask_dir = ctx.cfg.text("masks");
  std::vector<std::string> lines;
  size_t boxes = 0, empty = 0;
  const std::vector<size_t> idx = ctx.subset(m);
  for (size_t i : idx) {
    const ManifestEntry& e = m.entries[i];
    fs::path mp;
    if (!mask_dir.empty()) {
      mp = fs::path(mask_dir) / (e.id() + ".png");
    } else if (e.mask_path) {
      mp = ctx.data_root() / *e.mask_path;
    } else {
      throw ValidationError("entry '" + e.id() + "' has no mask; pass a mask directory");
    }
    if (!fs::exists(mp)) throw IoError("mask not found: " + mp.string());
    const BinaryMask mask = mask_from_image(read_image(mp));
    std::vector<BoundingBox> found;
    if (components) {
      found = extract_component_bboxes(mask, pad);
    } else if (auto b = extract_bbox(mask, pad)) {
      found.push_back(*b);
    }
    if (found.empty()) ++empty;
    for (const auto& b : found) lines.push_back(formats::bbox_line(e.id(), b));
    boxes += found.size();
    if (render) {
      Image8 img = read_image(ctx.data_root() / e.image_path);
      if (img.width != mask.width || img.height != mask.height) {
        throw DimensionError("mask of '" + e.id() + "' does not match its image size");
      }
      if (img.channels == 1) img = to_image8(to_float_rgb(img));
      for (const auto& b : found) img = render_bbox(img, b, {255, 0, 0}, thickness);
      write_image(ctx.artifact("rendered/" + e.id() + ".png"), img);
    }
  }
  write_lines(ctx.artifact("boxes" + ctx.suffix + ".jsonl"), lines);
  ctx.metrics["images"] = idx.size();
  ctx.metrics["boxes"] = boxes;
  ctx.metrics["empty_masks"] = empty;
}

std::vector<MultiResSample> classifier_inputs(Context& ctx, const Manifest& m, std::span<const size_t> idx) {
  const std::string boxes_path = ctx.cfg.text("boxes");
  if (boxes_path.empty()) return load_classifier_samples(m, ctx.data_root(), idx);
  if (!fs::exists(boxes_path)) throw IoError("boxes file not found: " + boxes_path);
  std::map<std::string, BoundingBox> first;
  for (const auto& r : formats::parse_boxes(read_text(boxes_path))) first.emplace(r.image, r.box);
  std::vector<MultiResSample> out;
  for (size_t i : idx) {
    const ManifestEntry& e = m.entries[i];
    Image8 img = read_image(ctx.data_root() / e.image_path);
    if (auto it = first.find(e.id()); it != first.end()) {
      const BoundingBox& b = it->second;
      img = crop(img, b.x_min, b.y_min, b.width(), b.height());
    }
    out.push_back(make_multires_sample(to_float_rgb(img), e.label));
  }
  return out;
}

void stage_classify(Context& ctx) {
  const Manifest m = ctx.manifest();
  const MrfDcn model = load_mrf_dcn(checkpoint_input(ctx, "mrf_dcn.ckpt"));
  const std::vector<size_t> idx = ctx.subset(m);
  const std::vector<MultiResSample> samples = classifier_inputs(ctx, m, idx);
  const auto probs = predict_all(model, samples);
  std::vector<std::string> lines;
  for (size_t j = 0; j < idx.size(); ++j) {
    const ManifestEntry& e = m.entries[idx[j]];
    lines.push_back(formats::prediction_line({e.id(), e.label, argmax(probs[j]), probs[j]}));
  }
  write_lines(ctx.artifact("predictions" + ctx.suffix + ".jsonl"), lines);
  ctx.metrics["images"] = idx.size();
  if (!idx.empty()) ctx.metrics["accuracy"] = accuracy_of(probs, labels_of(samples));
}

void stage_extract_features(Context& ctx) {
  const Manifest m = ctx.manifest();
  const MrfDcn model = load_mrf_dcn(checkpoint_input(ctx, "mrf_dcn.ckpt"));
  const std::vector<size_t> idx = ctx.subset(m);
  const std::vector<MultiResSample> samples = classifier_inputs(ctx, m, idx);
  const auto feats = features_all(model, samples);
  std::vector<risk::LabeledVector> rows;
  for (size_t j = 0; j < idx.size(); ++j) {
    const ManifestEntry& e = m.entries[idx[j]];
    rows.push_back({e.id(), e.label, std::vector<double>(feats[j].begin(), feats[j].end())});
  }
  formats::save_features(ctx.artifact("features" + ctx.suffix + ".jsonl"), rows);
  ctx.metrics["vectors"] = rows.size();
  ctx.metrics["dim"] = rows.empty() ? 0 : rows.front().values.size();
}

risk::PriorMode prior_mode(const std::string& v) {
  if (v == "equal") return risk::PriorMode::Equal;
  if (v == "empirical") return risk::PriorMode::Empirical;
  throw ValidationError("priors must be equal or empirical, got '" + v + "'");
}

void stage_fit_risk(Context& ctx) {
  const auto rows = formats::load_features(ctx.input("features", "features" + ctx.suffix + ".jsonl"));
  formats::StoredStatistics stored;
  stored.config.ridge = ctx.cfg.real("ridge");
  stored.config.priors = prior_mode(ctx.cfg.text("priors"));
  stored.classes = risk::fit_class_statistics(rows, stored.config);
  const std::string sp = ctx.cfg.text("stats");
  const fs::path out = sp.empty() ? ctx.out / "risk_stats.json" : fs::path(sp);
  write_text(out, formats::stats_to_json(stored));
  ctx.record(out);
  ctx.metrics["vectors"] = rows.size();
  ctx.metrics["classes"] = stored.classes.size();
  json counts = json::object();
  for (const auto& s : stored.classes) counts[std::to_string(s.class_id())] = s.count();
  ctx.metrics["class_counts"] = counts;
}

void stage_risk(Context& ctx) {
  const auto rows = formats::load_features(ctx.input("features", "features" + ctx.suffix + ".jsonl"));
  formats::StoredStatistics stored = formats::load_stats(ctx.input("stats", "risk_stats.json"));
  risk::RiskConfig cfg = stored.config;
  cfg.cosine_threshold = ctx.cfg.real("cosine-threshold");
  risk::validate(cfg);
  std::vector<std::string> lines;
  size_t labelled = 0, hit = 0, flagged = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    const risk::RiskReport rep = risk::assess_risk(r.values, stored.classes, cfg);
    lines.push_back(formats::risk_report_line(r.id, rep));
    double total = 0.0;
    for (double p : rep.posteriors) total += p;
    worst = std::max(worst, std::abs(total - 1.0));
    flagged += rep.high_risk_classes.empty() ? 0 : 1;
    if (r.label >= 0) {
      ++labelled;
      hit += rep.predicted_class == r.label ? 1 : 0;
    }
  }
  write_lines(ctx.artifact("risk_reports" + ctx.suffix + ".jsonl"), lines);
  ctx.metrics["reports"] = rows.size();
  ctx.metrics["flagged"] = flagged;
  ctx.metrics["max_posterior_sum_error"] = worst;
  if (labelled > 0) ctx.metrics["accuracy"] = static_cast<double>(hit) / static_cast<double>(labelled);
}

void stage_eval(Context& ctx) {
  bool did = false;
  json all = json::object();
  const std::string pred_key = ctx.cfg.text("predictions");
  const fs::path pred_path = pred_key.empty() ? ctx.out / ("predictions" + ctx.suffix + ".jsonl") : fs::path(pred_key);
  if (!pred_key.empty() || fs::exists(pred_path)) {
    if (!fs::exists(pred_path)) throw IoError("predictions file not found: " + pred_path.string());
    const auto preds = formats::parse_predictions(read_text(pred_path));
    std::vector<int> p, t;
    for (const auto& r : preds) {
      if (r.label < 0) continue;
      p.push_back(r.predicted);
      t.push_back(r.label);
    }
    const auto cm = metrics::confusion_matrix(p, t, kNumClasses);
    const auto rep = metrics::classification_report(cm);
    std::vector<std::string> names;
    for (auto n : kClassNames) names.emplace_back(n);
    write_text(ctx.artifact("classification_report" + ctx.suffix + ".json"), formats::report_to_json(rep, cm) + "\n");
    write_text(ctx.artifact("classification_report" + ctx.suffix + ".txt"), metrics::format_report(rep, names));
    write_text(ctx.artifact("confusion" + ctx.suffix + ".csv"), metrics::confusion_csv(cm));
    all["classification"] = {{"accuracy", rep.accuracy},
                             {"macro_f1", rep.macro.f1},
                             {"weighted_f1", rep.weighted.f1},
                             {"total", rep.total}};
    did = true;
  }
  if (const std::string dir = ctx.cfg.text("masks"); !dir.empty()) {
    const Manifest m = ctx.manifest();
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double iou_sum = 0.0, dice_sum = 0.0;
    size_t n = 0;
    for (size_t i : ctx.subset(m)) {
      const ManifestEntry& e = m.entries[i];
      if (!e.mask_path) continue;
      const fs::path pp = fs::path(dir) / (e.id() + ".png");
      if (!fs::exists(pp)) throw IoError("predicted mask not found: " + pp.string());
      const BinaryMask pred = mask_from_image(read_image(pp));
      const BinaryMask gt = mask_from_image(read_image(ctx.data_root() / *e.mask_path));
      const auto s = metrics::segmentation_score(pred, gt);
      tp += s.tp, fp += s.fp, fn += s.fn, tn += s.tn;
      iou_sum += s.iou;
      dice_sum += s.dice;
      ++n;
    }
    if (n == 0) throw ValidationError("no manifest entries with ground-truth masks to evaluate");
    json seg = scores_json(metrics::score_from_counts(tp, fp, fn, tn));
    seg["mean_image_iou"] = iou_sum / static_cast<double>(n);
    seg["mean_image_dice"] = dice_sum / static_cast<double>(n);
    seg["images"] = n;
    all["segmentation"] = seg;
    did = true;
  }
  if (const std::string tf = ctx.cfg.text("train-features"); !tf.empty()) {
    if (!fs::exists(tf)) throw IoError("train-features file not found: " + tf);
    const auto train = formats::load_features(tf);
    const auto test = formats::load_features(ctx.input("features", "features" + ctx.suffix + ".jsonl"));
    const int k = ctx.positive("k");
    const risk::KnnResult r = risk::knn_feature_eval(train, test, k, kNumClasses);
    all["knn"] = {{"k", k},
                  {"accuracy", r.accuracy},
                  {"macro_f1", r.report.macro.f1},
                  {"weighted_f1", r.report.weighted.f1},
                  {"macro_precision", r.report.macro.precision},
                  {"weighted_precision", r.report.weighted.precision},
                  {"macro_recall", r.report.macro.recall},
                  {"weighted_recall", r.report.weighted.recall}};
    did = true;
  }
  if (!did) throw UsageError("eval needs predictions, a predicted-mask directory (masks) or train-features");
  write_text(ctx.artifact("eval" + ctx.suffix + ".json"), all.dump(2) + "\n");
  ctx.metrics = all;
}

}  // namespace

StageResult run_stage(const std::string& stage, const RunConfig& cfg) {
  using Fn = void (*)(Context&);
  static const std::map<std::string, Fn> table = {
      {"synth", stage_synth},
      {"train-classifier", stage_train_classifier},
      {"train-mtl", stage_train_mtl},
      {"segment", stage_segment},
      {"bbox", stage_bbox},
      {"classify", stage_classify},
      {"extract-features", stage_extract_features},
      {"fit-risk", stage_fit_risk},
      {"risk", stage_risk},
      {"eval", stage_eval},
  };
  const auto it = table.find(stage);
  if (it == table.end()) throw UsageError("unknown stage '" + stage + "'");
  const auto t0 = std::chrono::steady_clock::now();

  Context ctx{cfg, stage, fs::path(cfg.text("out")), "", json::object(), {}};
  if (ctx.out.empty()) throw ValidationError("output directory must not be empty");
  const std::string subset = cfg.text("subset");
  if (subset != "all") ctx.suffix = "_" + subset;
  fs::create_directories(ctx.out);
  it->second(ctx);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json report = {{"stage", stage},
                 {"config", cfg.effective()},
                 {"wall_time_seconds", secs},
                 {"metrics", ctx.metrics},
                 {"artifacts", ctx.artifacts}};
  StageResult r;
  r.report_path = ctx.out / ("report_" + stage + ctx.suffix + ".json");
  report["artifacts"].push_back(r.report_path.string());
  r.report_json = report.dump(2) + "\n";
  write_text(r.report_path, r.report_json);
  return r;
}

}  // namespace cyto::pipeline
