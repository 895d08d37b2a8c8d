/*
 * C interface of the cytology pipeline library.
 *
 * Objects are opaque handles created and destroyed through this header.
 * Every fallible call returns a cyto_status; on failure a description of the
 * last error on the calling thread is available from cyto_last_error().
 * Images are 8-bit interleaved RGB, row-major; masks are one byte per pixel
 * (0 = background, non-zero = cell).
 */
#ifndef CYTO_H
#define CYTO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CYTO_BUILDING_LIBRARY)
#    define CYTO_API __declspec(dllexport)
#  else
#    define CYTO_API __declspec(dllimport)
#  endif
#else
#  define CYTO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define CYTO_NUM_CLASSES 5
#define CYTO_FEATURE_DIM 64

typedef enum cyto_status {
  CYTO_OK = 0,
  CYTO_ERR_VALIDATION = 1,
  CYTO_ERR_DIMENSION = 2,
  CYTO_ERR_NUMERIC = 3,
  CYTO_ERR_IO = 4,
  CYTO_ERR_FORMAT = 5,
  CYTO_ERR_USAGE = 6,
  CYTO_ERR_INTERNAL = 7
} cyto_status;

CYTO_API const char* cyto_version(void);
CYTO_API const char* cyto_status_string(cyto_status status);
/* Message of the most recent failure on this thread; "" if none. */
CYTO_API const char* cyto_last_error(void);
/* Process exit code for a status: 0 ok, 1 bad input, 2 runtime failure. */
CYTO_API int cyto_exit_code(cyto_status status);

CYTO_API const char* cyto_class_name(int class_id);

/* ---- run configuration and pipeline stages ---------------------------- */

typedef struct cyto_config cyto_config;

CYTO_API cyto_status cyto_config_create(cyto_config** out);
CYTO_API void cyto_config_destroy(cyto_config* cfg);
CYTO_API cyto_status cyto_config_set(cyto_config* cfg, const char* key, const char* value);
/* Flat "key = value" file; later cyto_config_set calls override it. */
CYTO_API cyto_status cyto_config_load_file(cyto_config* cfg, const char* path);
/* Copies the effective value into buf (NUL-terminated). *needed receives the
 * full length including the terminator; a short buffer is CYTO_ERR_USAGE. */
CYTO_API cyto_status cyto_config_get(const cyto_config* cfg, const char* key, char* buf, size_t cap,
                                     size_t* needed);

CYTO_API size_t cyto_config_key_count(void);
CYTO_API const char* cyto_config_key_name(size_t index);
CYTO_API const char* cyto_config_key_default(size_t index);
CYTO_API const char* cyto_config_key_help(size_t index);
/* "int", "real", "text" or "flag". */
CYTO_API const char* cyto_config_key_type(size_t index);

CYTO_API size_t cyto_stage_count(void);
CYTO_API const char* cyto_stage_name(size_t index);

/* Runs one stage. On success the report path is copied into report_path
 * (may be NULL when cap is 0). */
CYTO_API cyto_status cyto_run_stage(const char* stage, const cyto_config* cfg, char* report_path, size_t cap);

/* ---- MRF-DCN classifier ----------------------------------------------- */

typedef struct cyto_classifier cyto_classifier;

CYTO_API cyto_status cyto_classifier_create(uint64_t seed, cyto_classifier** out);
CYTO_API cyto_status cyto_classifier_load(const char* path, cyto_classifier** out);
CYTO_API cyto_status cyto_classifier_save(const cyto_classifier* model, const char* path);
CYTO_API void cyto_classifier_destroy(cyto_classifier* model);
CYTO_API cyto_status cyto_classifier_parameter_count(const cyto_classifier* model, size_t* out);
/* probs: CYTO_NUM_CLASSES floats; features: CYTO_FEATURE_DIM floats or NULL. */
CYTO_API cyto_status cyto_classifier_predict(const cyto_classifier* model, const uint8_t* rgb, int width, int height,
                                             float* probs, float* features);

/* ---- multi-task UNet -------------------------------------------------- */

typedef struct cyto_segmenter cyto_segmenter;

CYTO_API cyto_status cyto_segmenter_create(uint64_t seed, int input_side, cyto_segmenter** out);
CYTO_API cyto_status cyto_segmenter_load(const char* path, cyto_segmenter** out);
CYTO_API cyto_status cyto_segmenter_save(const cyto_segmenter* model, const char* path);
CYTO_API void cyto_segmenter_destroy(cyto_segmenter* model);
/* mask_probs: width*height floats at the source size; class_probs: 5 or NULL. */
CYTO_API cyto_status cyto_segmenter_predict(const cyto_segmenter* model, const uint8_t* rgb, int width, int height,
                                            float* mask_probs, float* class_probs);

/* ---- mask post-processing --------------------------------------------- */

typedef struct cyto_box {
  int x_min, y_min, x_max, y_max; /* inclusive pixel coordinates */
} cyto_box;

/* *found is 0 for an empty mask, in which case box is left untouched. */
CYTO_API cyto_status cyto_extract_bbox(const uint8_t* mask, int width, int height, int padding, cyto_box* box,
                                       int* found);
/* anchors receives x,y pairs; *count is the number of anchors. If cap (in
 * pairs) is too small nothing is written and CYTO_ERR_USAGE is returned. */
CYTO_API cyto_status cyto_patch_grid(int width, int height, int patch_side, int cols, int rows, int* anchors,
                                     size_t cap, size_t* count);

/* ---- metrics ---------------------------------------------------------- */

CYTO_API cyto_status cyto_mask_scores(const uint8_t* pred, const uint8_t* truth, int width, int height, double* iou,
                                      double* dice);

typedef struct cyto_class_summary {
  double accuracy;
  double macro_precision, macro_recall, macro_f1;
  double weighted_precision, weighted_recall, weighted_f1;
} cyto_class_summary;

CYTO_API cyto_status cyto_classification_summary(const int* predicted, const int* truth, size_t n, int classes,
                                                 cyto_class_summary* out);

/* ---- risk assessment -------------------------------------------------- */

typedef struct cyto_risk_model cyto_risk_model;

typedef struct cyto_risk_result {
  int predicted_class;
  int class_count;
  int class_ids[CYTO_NUM_CLASSES];
  double posteriors[CYTO_NUM_CLASSES];
  double cosines[CYTO_NUM_CLASSES];
  int high_risk[CYTO_NUM_CLASSES]; /* 1 when cosine exceeds the threshold */
} cyto_risk_result;

/* features: n rows of dim doubles; labels in [0, CYTO_NUM_CLASSES).
 * empirical_priors: 0 for equal priors. */
CYTO_API cyto_status cyto_risk_fit(const double* features, const int* labels, size_t n, size_t dim, double ridge,
                                   int empirical_priors, cyto_risk_model** out);
CYTO_API cyto_status cyto_risk_load(const char* path, cyto_risk_model** out);
CYTO_API cyto_status cyto_risk_save(const cyto_risk_model* model, const char* path);
CYTO_API void cyto_risk_destroy(cyto_risk_model* model);
CYTO_API cyto_status cyto_risk_assess(const cyto_risk_model* model, const double* x, size_t dim,
                                      double cosine_threshold, cyto_risk_result* out);

#ifdef __cplusplus
}
#endif

#endif /* CYTO_H */
