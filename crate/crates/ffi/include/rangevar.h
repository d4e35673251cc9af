#ifndef RANGEVAR_H
#define RANGEVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RvStatus {
  RV_STATUS_OK = 0,
  RV_STATUS_NULL_POINTER = 1,
  RV_STATUS_INVALID_ARGUMENT = 2,
  RV_STATUS_IO = 3,
  RV_STATUS_PARSE = 4,
  RV_STATUS_PREPROCESS = 5,
  RV_STATUS_CALIBRATE = 6,
  RV_STATUS_FIT = 7,
  RV_STATUS_NO_CONVERGENCE = 8,
  RV_STATUS_EVALUATE = 9,
  RV_STATUS_PANIC = 10,
} RvStatus;

typedef enum RvWeighting {
  RV_WEIGHTING_INVERSE_VARIANCE = 0,
  RV_WEIGHTING_UNWEIGHTED = 1,
  RV_WEIGHTING_COUNT = 2,
} RvWeighting;

typedef enum RvIntensityKind {
  RV_INTENSITY_KIND_RAW = 0,
  RV_INTENSITY_KIND_SCALED = 1,
  RV_INTENSITY_KIND_CALIBRATED = 2,
} RvIntensityKind;

// Parsed scan.
typedef struct RvDataset RvDataset;

// Model, plus the fit diagnostics when it came from a fit.
typedef struct RvModel RvModel;

// Per-tick statistics, optionally with calibrated intensities.
typedef struct RvTicks RvTicks;

// Preprocessing settings; pass NULL for the defaults.
typedef struct RvPreprocessOptions {
  double sigma_multiplier;
  size_t min_tick_count;
  // 0 disables outlier screening.
  size_t max_passes;
  // Radians; 0 estimates the step from the data.
  double tick_step;
} RvPreprocessOptions;

typedef struct RvTickStats {
  int64_t tick_id;
  double vertical_angle_center;
  double mean_intensity;
  double mean_range_m;
  double std_range_mm;
  size_t count;
  // NaN until the ticks are calibrated.
  double calibrated_intensity;
} RvTickStats;

typedef struct RvFitOptions {
  size_t max_iterations;
  enum RvWeighting weighting;
} RvFitOptions;

typedef struct RvModelParams {
  double a;
  double b;
  // Millimeters.
  double c;
  double domain_min;
  double domain_max;
  enum RvIntensityKind kind;
} RvModelParams;

typedef struct RvFitSummary {
  size_t iterations;
  size_t point_count;
  double final_cost;
  double rms_residual_mm;
  double stddev_a;
  double stddev_b;
  double stddev_c;
} RvFitSummary;

typedef struct RvEvaluation {
  double rmse_mm;
  double max_abs_residual_mm;
  size_t tick_count;
  size_t extrapolated_count;
} RvEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next `rv_*` call on the same thread.
const char *rv_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rv_version(void);

// Parses a profile-scan CSV file with angles in radians.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum RvStatus rv_dataset_read(const char *path, bool lenient, struct RvDataset **out);

// Parses profile-scan CSV text with angles in radians.
//
// # Safety
// `text` must point to `len` readable bytes and `out` must be valid.
enum RvStatus rv_dataset_parse(const char *text, size_t len, bool lenient, struct RvDataset **out);

// Number of observations; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t rv_dataset_len(const struct RvDataset *ds);

// # Safety
// `ds` must be NULL or a handle not freed before.
void rv_dataset_free(struct RvDataset *ds);

// Groups by vertical tick, screens outliers and summarises each tick.
//
// # Safety
// `ds` must be a live dataset, `opts` NULL or valid, `out` valid.
enum RvStatus rv_preprocess(const struct RvDataset *ds,
                            const struct RvPreprocessOptions *opts,
                            struct RvTicks **out);

// Number of ticks; 0 for NULL.
//
// # Safety
// `ticks` must be NULL or a live ticks handle.
size_t rv_ticks_len(const struct RvTicks *ticks);

// Copies tick `index` into `out`.
//
// # Safety
// `ticks` must be live and `out` valid.
enum RvStatus rv_ticks_get(const struct RvTicks *ticks, size_t index, struct RvTickStats *out);

// Adds range-calibrated intensities. `r_ref <= 0` uses the mean tick range.
//
// # Safety
// `ticks` must be a live ticks handle.
enum RvStatus rv_calibrate(struct RvTicks *ticks, double r_ref);

// Fits the model. Calibrated ticks give a general model on calibrated
// intensities; otherwise the model uses the scan's intensity kind.
//
// # Safety
// `ticks` must be live, `opts` NULL or valid, `out` valid.
enum RvStatus rv_fit(const struct RvTicks *ticks,
                     const struct RvFitOptions *opts,
                     struct RvModel **out);

// A model from known parameters over `(0, inf)`.
//
// # Safety
// `out` must be valid.
enum RvStatus rv_model_new(double a,
                           double b,
                           double c,
                           enum RvIntensityKind kind,
                           struct RvModel **out);

// Reads a model JSON document (a fit record or a bare model).
//
// # Safety
// `json` must be NUL-terminated and `out` valid.
enum RvStatus rv_model_from_json(const char *json, struct RvModel **out);

// Serialises the model (with fit diagnostics when present) to JSON.
// Release the string with [`rv_string_free`].
//
// # Safety
// `model` must be live and `out` valid.
enum RvStatus rv_model_to_json(const struct RvModel *model, char **out);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void rv_string_free(char *s);

// # Safety
// `model` must be live and `out` valid.
enum RvStatus rv_model_params(const struct RvModel *model, struct RvModelParams *out);

// Solver diagnostics; `RV_STATUS_INVALID_ARGUMENT` for models not from a fit.
// Standard deviations are NaN when the fit had only three points.
//
// # Safety
// `model` must be live and `out` valid.
enum RvStatus rv_model_fit_summary(const struct RvModel *model, struct RvFitSummary *out);

// Predicted range standard deviation in mm at `intensity`.
//
// # Safety
// `model` must be live and `out` valid.
enum RvStatus rv_model_sigma(const struct RvModel *model, double intensity, double *out);

// Residual metrics of `model` against `ticks`. A calibrated model needs
// calibrated ticks.
//
// # Safety
// `model` and `ticks` must be live and `out` valid.
enum RvStatus rv_evaluate(const struct RvModel *model,
                          const struct RvTicks *ticks,
                          struct RvEvaluation *out);

// # Safety
// `ticks` must be NULL or a handle not freed before.
void rv_ticks_free(struct RvTicks *ticks);

// # Safety
// `model` must be NULL or a handle not freed before.
void rv_model_free(struct RvModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANGEVAR_H */
