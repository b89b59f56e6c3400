#ifndef ENVAUTH_H
#define ENVAUTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of features produced by `ea_extract_features`.
 */
#define EA_FEATURE_COUNT 7

typedef enum EaStatus {
  EA_STATUS_OK = 0,
  EA_STATUS_NULL_POINTER = 1,
  EA_STATUS_INVALID_INPUT = 2,
  EA_STATUS_NUMERICAL = 3,
  EA_STATUS_UNSUPPORTED_DIMENSION = 4,
  EA_STATUS_NO_NEIGHBORS = 5,
  EA_STATUS_NOT_FOUND = 6,
  EA_STATUS_UNSUPPORTED_TRANSFER = 7,
  EA_STATUS_IO = 8,
  EA_STATUS_SCHEMA = 9,
  EA_STATUS_PANIC = 10,
} EaStatus;

typedef enum EaVerdict {
  EA_VERDICT_LEGITIMATE = 0,
  EA_VERDICT_ATTACKER = 1,
} EaVerdict;

/**
 * Fingerprint matrix (n rows of m features) tagged with object and window.
 */
typedef struct EaFingerprint EaFingerprint;

/**
 * Result of running a scenario.
 */
typedef struct EaReport EaReport;

/**
 * Validated synthetic scenario configuration.
 */
typedef struct EaScenario EaScenario;

/**
 * Rotation plus translation acting on fingerprint rows.
 */
typedef struct EaTransform EaTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *ea_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ea_version(void);

/**
 * Writes the seven features of `samples` into `out_values`
 * (`EA_FEATURE_COUNT` doubles).
 *
 * # Safety
 * `samples` and `template_samples` must point to the given number of
 * doubles; `out_values` must have room for `EA_FEATURE_COUNT` doubles.
 */
enum EaStatus ea_extract_features(const double *samples,
                                  size_t len,
                                  const double *template_samples,
                                  size_t template_len,
                                  double *out_values);

/**
 * Builds a fingerprint from `rows * cols` row-major doubles.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles and `object_id` to a
 * NUL-terminated UTF-8 string.
 */
enum EaStatus ea_fingerprint_new(const double *data,
                                 size_t rows,
                                 size_t cols,
                                 const char *object_id,
                                 uint32_t window_index,
                                 struct EaFingerprint **out_fingerprint);

/**
 * # Safety
 * `fingerprint` must be NULL or a handle from this library, freed once.
 */
void ea_fingerprint_free(struct EaFingerprint *fingerprint);

/**
 * # Safety
 * `fingerprint` must be a valid handle.
 */
size_t ea_fingerprint_rows(const struct EaFingerprint *fingerprint);

/**
 * # Safety
 * `fingerprint` must be a valid handle.
 */
size_t ea_fingerprint_cols(const struct EaFingerprint *fingerprint);

/**
 * Copies the fingerprint row-major into `buffer` of `len` doubles.
 *
 * # Safety
 * `fingerprint` must be a valid handle and `buffer` hold `len` doubles.
 */
enum EaStatus ea_fingerprint_data(const struct EaFingerprint *fingerprint,
                                  double *buffer,
                                  size_t len);

/**
 * Gaussian Bhattacharyya distance between two fingerprints.
 *
 * # Safety
 * Both handles must be valid; `out_distance` must be writable.
 */
enum EaStatus ea_bhattacharyya(const struct EaFingerprint *a,
                               const struct EaFingerprint *b,
                               double *out_distance);

/**
 * Legitimate iff `distance <= threshold`.
 */
enum EaVerdict ea_authenticate(double distance, double threshold);

/**
 * Threshold maximizing balanced accuracy; `attacker_len` may be 0.
 *
 * # Safety
 * Arrays must hold the given number of doubles.
 */
enum EaStatus ea_calibrate_threshold(const double *legit,
                                     size_t legit_len,
                                     const double *attackers,
                                     size_t attacker_len,
                                     double margin,
                                     double *out_threshold);

/**
 * Aligns `observed` to `reference`; `out_degenerate` (optional) is set
 * when the rotation was undetermined and identity was used.
 *
 * # Safety
 * Handles must be valid; `out_degenerate` may be NULL.
 */
enum EaStatus ea_estimate_transform(const struct EaFingerprint *observed,
                                    const struct EaFingerprint *reference,
                                    struct EaTransform **out_transform,
                                    bool *out_degenerate);

/**
 * Builds a transform from an `m * m` row-major rotation and length-`m`
 * translation. Fails unless the rotation is proper.
 *
 * # Safety
 * Arrays must hold `m * m` and `m` doubles.
 */
enum EaStatus ea_transform_new(const double *rotation,
                               const double *translation,
                               size_t m,
                               struct EaTransform **out_transform);

/**
 * # Safety
 * `transform` must be NULL or a handle from this library, freed once.
 */
void ea_transform_free(struct EaTransform *transform);

/**
 * # Safety
 * `transform` must be a valid handle.
 */
size_t ea_transform_dim(const struct EaTransform *transform);

/**
 * Copies the rotation (row-major, `dim * dim` doubles).
 *
 * # Safety
 * `transform` must be valid and `buffer` hold `len` doubles.
 */
enum EaStatus ea_transform_rotation(const struct EaTransform *transform,
                                    double *buffer,
                                    size_t len);

/**
 * Copies the translation (`dim` doubles).
 *
 * # Safety
 * `transform` must be valid and `buffer` hold `len` doubles.
 */
enum EaStatus ea_transform_translation(const struct EaTransform *transform,
                                       double *buffer,
                                       size_t len);

/**
 * Weighted fusion of `count` transforms.
 *
 * # Safety
 * `transforms` must hold `count` valid handles and `weights` `count` doubles.
 */
enum EaStatus ea_fuse_transforms(const struct EaTransform *const *transforms,
                                 const double *weights,
                                 size_t count,
                                 struct EaTransform **out_transform);

/**
 * Applies `transform` to every row of `reference`.
 *
 * # Safety
 * Handles must be valid.
 */
enum EaStatus ea_correct_reference(const struct EaFingerprint *reference,
                                   const struct EaTransform *transform,
                                   struct EaFingerprint **out_fingerprint);

/**
 * Parses and validates a scenario configuration from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum EaStatus ea_scenario_from_json(const char *json, struct EaScenario **out_scenario);

/**
 * # Safety
 * `scenario` must be NULL or a handle from this library, freed once.
 */
void ea_scenario_free(struct EaScenario *scenario);

/**
 * Runs the scenario.
 *
 * # Safety
 * `scenario` must be valid.
 */
enum EaStatus ea_scenario_run(const struct EaScenario *scenario, struct EaReport **out_report);

/**
 * # Safety
 * `report` must be NULL or a handle from this library, freed once.
 */
void ea_report_free(struct EaReport *report);

/**
 * Serializes the report as JSON; release with `ea_string_free`.
 *
 * # Safety
 * `report` must be valid.
 */
enum EaStatus ea_report_json(const struct EaReport *report, char **out_json);

/**
 * Calibrated thresholds of the plain and compensated pipelines.
 *
 * # Safety
 * `report` must be valid; out-pointers writable.
 */
enum EaStatus ea_report_thresholds(const struct EaReport *report,
                                   double *out_tau_base,
                                   double *out_tau_env);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void ea_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENVAUTH_H */
