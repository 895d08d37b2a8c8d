#include "cyto/cyto.h"

#include <cstring>
#include <new>
#include <string>

#include "cyto/checkpoint.hpp"
#include "cyto/dataset.hpp"
#include "cyto/error.hpp"
#include "cyto/formats.hpp"
#include "cyto/metrics.hpp"
#include "cyto/mrf_dcn.hpp"
#include "cyto/mtl_unet.hpp"
#include "cyto/pipeline.hpp"
#include "cyto/risk.hpp"
#include "cyto/seg_post.hpp"

struct cyto_config {
  cyto::pipeline::RunConfig cfg;
};

struct cyto_classifier {
  cyto::MrfDcn model;
};

struct cyto_segmenter {
  cyto::MtlUnet model;
};

struct cyto_risk_model {
  cyto::formats::StoredStatistics stats;
};

namespace {

thread_local std::string g_last_error;

cyto_status status_of(cyto::ErrorKind k) {
  switch (k) {
    case cyto::ErrorKind::Validation: return CYTO_ERR_VALIDATION;
    case cyto::ErrorKind::Dimension: return CYTO_ERR_DIMENSION;
    case cyto::ErrorKind::Numeric: return CYTO_ERR_NUMERIC;
    case cyto::ErrorKind::Io: return CYTO_ERR_IO;
    case cyto::ErrorKind::Format: return CYTO_ERR_FORMAT;
    case cyto::ErrorKind::Usage: return CYTO_ERR_USAGE;
  }
  return CYTO_ERR_INTERNAL;
}

template <typename Fn>
cyto_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CYTO_OK;
  } catch (const cyto::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CYTO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CYTO_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CYTO_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw cyto::UsageError(std::string(what) + " must not be NULL");
}

cyto::Image8 rgb_image(const uint8_t* rgb, int width, int height) {
  need(rgb, "rgb");
  if (width < 1 || height < 1) throw cyto::DimensionError("image extents must be positive");
  cyto::Image8 img(width, height, 3);
  std::memcpy(img.pixels.data(), rgb, img.pixels.size());
  return img;
}

cyto::BinaryMask byte_mask(const uint8_t* bytes, int width, int height) {
  need(bytes, "mask");
  cyto::BinaryMask m(width, height);
  for (size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = bytes[i] ? 1 : 0;
  return m;
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (cap == 0 && !buf) return;
  if (!buf || cap < s.size() + 1) throw cyto::UsageError("output buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

const char* kind_name(cyto::pipeline::KeyKind k) {
  switch (k) {
    case cyto::pipeline::KeyKind::Int: return "int";
    case cyto::pipeline::KeyKind::Real: return "real";
    case cyto::pipeline::KeyKind::Text: return "text";
    case cyto::pipeline::KeyKind::Flag: return "flag";
  }
  return "text";
}

}  // namespace

extern "C" {

const char* cyto_version(void) { return "1.0.0"; }

const char* cyto_status_string(cyto_status status) {
  switch (status) {
    case CYTO_OK: return "ok";
    case CYTO_ERR_VALIDATION: return "validation error";
    case CYTO_ERR_DIMENSION: return "dimension error";
    case CYTO_ERR_NUMERIC: return "numeric error";
    case CYTO_ERR_IO: return "i/o error";
    case CYTO_ERR_FORMAT: return "format error";
    case CYTO_ERR_USAGE: return "usage error";
    case CYTO_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cyto_last_error(void) { return g_last_error.c_str(); }

int cyto_exit_code(cyto_status status) {
  switch (status) {
    case CYTO_OK: return 0;
    case CYTO_ERR_NUMERIC:
    case CYTO_ERR_INTERNAL: return 2;
    default: return 1;
  }
}

const char* cyto_class_name(int class_id) {
  if (class_id < 0 || class_id >= cyto::kNumClasses) return nullptr;
  return cyto::kClassNames[class_id].data();
}

cyto_status cyto_config_create(cyto_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cyto_config();
  });
}

void cyto_config_destroy(cyto_config* cfg) { delete cfg; }

cyto_status cyto_config_set(cyto_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

cyto_status cyto_config_load_file(cyto_config* cfg, const char* path) {
  return guarded([&] {
    need(cfg, "cfg");
    need(path, "path");
    cfg->cfg.load_file(path);
  });
}

cyto_status cyto_config_get(const cyto_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    copy_out(cfg->cfg.text(key), buf, cap, needed);
  });
}

size_t cyto_config_key_count(void) { return cyto::pipeline::config_keys().size(); }

const char* cyto_config_key_name(size_t index) {
  const auto keys = cyto::pipeline::config_keys();
  return index < keys.size() ? keys[index].name : nullptr;
}

const char* cyto_config_key_default(size_t index) {
  const auto keys = cyto::pipeline::config_keys();
  return index < keys.size() ? keys[index].default_value : nullptr;
}

const char* cyto_config_key_help(size_t index) {
  const auto keys = cyto::pipeline::config_keys();
  return index < keys.size() ? keys[index].help : nullptr;
}

const char* cyto_config_key_type(size_t index) {
  const auto keys = cyto::pipeline::config_keys();
  return index < keys.size() ? kind_name(keys[index].kind) : nullptr;
}

size_t cyto_stage_count(void) { return cyto::pipeline::stage_names().size(); }

const char* cyto_stage_name(size_t index) {
  const auto stages = cyto::pipeline::stage_names();
  return index < stages.size() ? stages[index] : nullptr;
}

cyto_status cyto_run_stage(const char* stage, const cyto_config* cfg, char* report_path, size_t cap) {
  return guarded([&] {
    need(stage, "stage");
    need(cfg, "cfg");
    const auto r = cyto::pipeline::run_stage(stage, cfg->cfg);
    if (report_path || cap) copy_out(r.report_path.string(), report_path, cap, nullptr);
  });
}

cyto_status cyto_classifier_create(uint64_t seed, cyto_classifier** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cyto_classifier{cyto::MrfDcn(seed)};
  });
}

cyto_status cyto_classifier_load(const char* path, cyto_classifier** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cyto_classifier{cyto::load_mrf_dcn(path)};
  });
}

cyto_status cyto_classifier_save(const cyto_classifier* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    cyto::save_checkpoint(path, model->model);
  });
}

void cyto_classifier_destroy(cyto_classifier* model) { delete model; }

cyto_status cyto_classifier_parameter_count(const cyto_classifier* model, size_t* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = cyto::count_parameters(model->model);
  });
}

cyto_status cyto_classifier_predict(const cyto_classifier* model, const uint8_t* rgb, int width, int height,
                                    float* probs, float* features) {
  return guarded([&] {
    need(model, "model");
    need(probs, "probs");
    const cyto::MultiResSample s = cyto::make_multires_sample(cyto::to_float_rgb(rgb_image(rgb, width, height)), 0,
                                                              model->model.branches());
    const cyto::MultiResSample* one[] = {&s};
    const cyto::ResolutionTriple x = cyto::stack_samples(one, model->model.branches());
    const cyto::nn::Tensor f = model->model.extract_features(x);
    cyto::nn::Graph g = cyto::nn::Graph::inference();
    const cyto::nn::Tensor p = model->model.head(g, f);
    std::copy(p.data().begin(), p.data().end(), probs);
    if (features) std::copy(f.data().begin(), f.data().end(), features);
  });
}

cyto_status cyto_segmenter_create(uint64_t seed, int input_side, cyto_segmenter** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cyto_segmenter{cyto::MtlUnet(seed, input_side)};
  });
}

cyto_status cyto_segmenter_load(const char* path, cyto_segmenter** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cyto_segmenter{cyto::load_mtl_unet(path)};
  });
}

cyto_status cyto_segmenter_save(const cyto_segmenter* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    cyto::save_checkpoint(path, model->model);
  });
}

void cyto_segmenter_destroy(cyto_segmenter* model) { delete model; }

cyto_status cyto_segmenter_predict(const cyto_segmenter* model, const uint8_t* rgb, int width, int height,
                                   float* mask_probs, float* class_probs) {
  return guarded([&] {
    need(model, "model");
    need(mask_probs, "mask_probs");
    const cyto::FloatImage img = cyto::to_float_rgb(rgb_image(rgb, width, height));
    const auto r = cyto::pipeline::segment_image(model->model, img, 512, 5, 4, 0.5f);
    std::copy(r.mask_probs.begin(), r.mask_probs.end(), mask_probs);
    if (class_probs) std::copy(r.class_probs.begin(), r.class_probs.end(), class_probs);
  });
}

cyto_status cyto_extract_bbox(const uint8_t* mask, int width, int height, int padding, cyto_box* box, int* found) {
  return guarded([&] {
    need(box, "box");
    need(found, "found");
    const auto b = cyto::extract_bbox(byte_mask(mask, width, height), padding);
    *found = b ? 1 : 0;
    if (b) *box = {b->x_min, b->y_min, b->x_max, b->y_max};
  });
}

cyto_status cyto_patch_grid(int width, int height, int patch_side, int cols, int rows, int* anchors, size_t cap,
                            size_t* count) {
  return guarded([&] {
    need(count, "count");
    const cyto::PatchGrid g = cyto::make_patch_grid(width, height, patch_side, cols, rows);
    *count = g.anchors.size();
    if (cap < g.anchors.size()) throw cyto::UsageError("anchor buffer holds fewer than " + std::to_string(*count));
    need(anchors, "anchors");
    for (size_t i = 0; i < g.anchors.size(); ++i) {
      anchors[2 * i] = g.anchors[i][0];
      anchors[2 * i + 1] = g.anchors[i][1];
    }
  });
}

cyto_status cyto_mask_scores(const uint8_t* pred, const uint8_t* truth, int width, int height, double* iou,
                             double* dice) {
  return guarded([&] {
    const auto s = cyto::metrics::segmentation_score(byte_mask(pred, width, height), byte_mask(truth, width, height));
    if (iou) *iou = s.iou;
    if (dice) *dice = s.dice;
  });
}

cyto_status cyto_classification_summary(const int* predicted, const int* truth, size_t n, int classes,
                                        cyto_class_summary* out) {
  return guarded([&] {
    need(out, "out");
    if (n > 0) {
      need(predicted, "predicted");
      need(truth, "truth");
    }
    const auto cm = cyto::metrics::confusion_matrix({predicted, n}, {truth, n}, classes);
    const auto r = cyto::metrics::classification_report(cm);
    *out = {r.accuracy,          r.macro.precision,    r.macro.recall, r.macro.f1,
            r.weighted.precision, r.weighted.recall, r.weighted.f1};
  });
}

cyto_status cyto_risk_fit(const double* features, const int* labels, size_t n, size_t dim, double ridge,
                          int empirical_priors, cyto_risk_model** out) {
  return guarded([&] {
    need(features, "features");
    need(labels, "labels");
    need(out, "out");
    if (dim == 0) throw cyto::DimensionError("feature dimension must be positive");
    std::vector<cyto::risk::LabeledVector> rows(n);
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || labels[i] >= cyto::kNumClasses) throw cyto::ValidationError("label outside [0,5)");
      rows[i].label = labels[i];
      rows[i].values.assign(features + i * dim, features + (i + 1) * dim);
    }
    cyto::formats::StoredStatistics s;
    s.config.ridge = ridge;
    s.config.priors = empirical_priors ? cyto::risk::PriorMode::Empirical : cyto::risk::PriorMode::Equal;
    s.classes = cyto::risk::fit_class_statistics(rows, s.config);
    *out = new cyto_risk_model{std::move(s)};
  });
}

cyto_status cyto_risk_load(const char* path, cyto_risk_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cyto_risk_model{cyto::formats::load_stats(path)};
  });
}

cyto_status cyto_risk_save(const cyto_risk_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    cyto::write_text(path, cyto::formats::stats_to_json(model->stats));
  });
}

void cyto_risk_destroy(cyto_risk_model* model) { delete model; }

cyto_status cyto_risk_assess(const cyto_risk_model* model, const double* x, size_t dim, double cosine_threshold,
                             cyto_risk_result* out) {
  return guarded([&] {
    need(model, "model");
    need(x, "x");
    need(out, "out");
    cyto::risk::RiskConfig cfg = model->stats.config;
    cfg.cosine_threshold = cosine_threshold;
    const auto r = cyto::risk::assess_risk({x, dim}, model->stats.classes, cfg);
    cyto_risk_result res{};
    res.predicted_class = r.predicted_class;
    res.class_count = static_cast<int>(r.class_ids.size());
    for (size_t i = 0; i < r.class_ids.size(); ++i) {
      res.class_ids[i] = r.class_ids[i];
      res.posteriors[i] = r.posteriors[i];
      res.cosines[i] = r.cosines[i];
    }
    for (int c : r.high_risk_classes) {
      for (size_t i = 0; i < r.class_ids.size(); ++i) {
        if (r.class_ids[i] == c) res.high_risk[i] = 1;
      }
    }
    *out = res;
  });
}

}  // extern "C"
