#ifndef OTFS_H
#define OTFS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum OtfsStatus {
  OTFS_STATUS_OK = 0,
  OTFS_STATUS_NULL_POINTER = 1,
  OTFS_STATUS_INVALID_UTF8 = 2,
  OTFS_STATUS_INVALID_ARGUMENT = 3,
  OTFS_STATUS_INVALID_CONFIG = 4,
  OTFS_STATUS_IO = 5,
  OTFS_STATUS_PARSE = 6,
  OTFS_STATUS_SIMULATION = 7,
  OTFS_STATUS_PANIC = 8,
} OtfsStatus;

typedef enum OtfsScheme {
  OTFS_SCHEME_SUPERIMPOSED = 0,
  OTFS_SCHEME_EMBEDDED = 1,
} OtfsScheme;

typedef enum OtfsEqualizer {
  OTFS_EQUALIZER_LMMSE = 0,
  OTFS_EQUALIZER_MRC = 1,
} OtfsEqualizer;

/**
 * Opaque sweep configuration.
 */
typedef struct OtfsConfig OtfsConfig;

/**
 * Opaque sweep result.
 */
typedef struct OtfsSweepResult OtfsSweepResult;

/**
 * Metrics of one simulated frame.
 */
typedef struct OtfsTrialRecord {
  uint64_t seed;
  double nmse;
  double ber;
  double papr_db;
  double se;
  uint64_t bit_errors;
  uint64_t bits;
  uint32_t iterations;
  bool converged;
} OtfsTrialRecord;

/**
 * Aggregates of one sweep grid point.
 */
typedef struct OtfsPointSummary {
  enum OtfsScheme scheme;
  enum OtfsEqualizer equalizer;
  uint32_t passes;
  bool ideal_csi;
  double alpha;
  uint64_t trials;
  double nmse;
  double nmse_ci;
  double ber;
  double ber_ci;
  double papr_mean_db;
  double papr_p99_db;
  double se;
  double se_ci;
} OtfsPointSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *otfs_last_error(void);

/**
 * Default configuration. Never null.
 */
struct OtfsConfig *otfs_config_default(void);

/**
 * Parses a JSON configuration; missing fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OtfsStatus otfs_config_from_json(const char *json, struct OtfsConfig **out);

/**
 * Serializes the configuration to JSON. The returned string must be
 * released with [`otfs_string_free`].
 *
 * # Safety
 * `cfg` must come from this library; `out` must be a valid pointer.
 */
enum OtfsStatus otfs_config_to_json(const struct OtfsConfig *cfg, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void otfs_string_free(char *s);

/**
 * # Safety
 * `cfg` must be a valid handle.
 */
enum OtfsStatus otfs_config_set_trials(struct OtfsConfig *cfg, uint64_t trials);

/**
 * # Safety
 * `cfg` must be a valid handle.
 */
enum OtfsStatus otfs_config_set_seed(struct OtfsConfig *cfg, uint64_t seed);

/**
 * Replaces the energy-split grid.
 *
 * # Safety
 * `cfg` must be a valid handle and `alphas` point to `len` values.
 */
enum OtfsStatus otfs_config_set_alphas(struct OtfsConfig *cfg, const double *alphas, size_t len);

/**
 * `OTFS_STATUS_OK` when the configuration is usable; otherwise
 * `OTFS_STATUS_INVALID_CONFIG` with every violation in the error message.
 *
 * # Safety
 * `cfg` must be a valid handle.
 */
enum OtfsStatus otfs_config_validate(const struct OtfsConfig *cfg);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void otfs_config_free(struct OtfsConfig *cfg);

/**
 * Simulates one frame with the given seed.
 *
 * # Safety
 * `cfg` must be a valid handle and `out` a valid pointer.
 */
enum OtfsStatus otfs_run_trial(const struct OtfsConfig *cfg,
                               enum OtfsScheme scheme_id,
                               enum OtfsEqualizer equalizer_id,
                               double alpha,
                               uint32_t passes,
                               bool ideal_csi,
                               uint64_t seed,
                               struct OtfsTrialRecord *out);

/**
 * Runs the full sweep on `threads` workers (0 uses every core).
 *
 * # Safety
 * `cfg` must be a valid handle and `out` a valid pointer.
 */
enum OtfsStatus otfs_run_sweep(const struct OtfsConfig *cfg,
                               uint32_t threads,
                               struct OtfsSweepResult **out);

/**
 * Number of grid points in a result (0 for null).
 *
 * # Safety
 * `res` must be null or a valid handle.
 */
size_t otfs_sweep_point_count(const struct OtfsSweepResult *res);

/**
 * # Safety
 * `res` must be a valid handle and `out` a valid pointer.
 */
enum OtfsStatus otfs_sweep_point(const struct OtfsSweepResult *res,
                                 size_t index,
                                 struct OtfsPointSummary *out);

/**
 * Writes `sweep.csv` and `summary.json` (and `records.csv` when records
 * were kept) into `dir`.
 *
 * # Safety
 * `res` must be a valid handle and `dir` a NUL-terminated string.
 */
enum OtfsStatus otfs_sweep_export(const struct OtfsSweepResult *res, const char *dir);

/**
 * # Safety
 * `res` must be null or a handle not yet freed.
 */
void otfs_sweep_free(struct OtfsSweepResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFS_H */
