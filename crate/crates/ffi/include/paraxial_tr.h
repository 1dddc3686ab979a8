#ifndef PARAXIAL_TR_H
#define PARAXIAL_TR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum PtrStatus {
  PTR_STATUS_OK = 0,
  PTR_STATUS_NULL_POINTER = 1,
  /**
   * A string argument is not valid UTF-8.
   */
  PTR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The config text could not be parsed.
   */
  PTR_STATUS_CONFIG = 3,
  /**
   * A value failed validation.
   */
  PTR_STATUS_VALIDATION = 4,
  /**
   * A quadrature did not converge.
   */
  PTR_STATUS_NUMERICAL = 5,
  PTR_STATUS_IO = 6,
  PTR_STATUS_BUFFER_TOO_SMALL = 7,
  PTR_STATUS_PANIC = 8,
} PtrStatus;

/**
 * A parsed experiment configuration.
 */
typedef struct PtrConfig PtrConfig;

/**
 * Monte Carlo ensemble statistics.
 */
typedef struct PtrEnsemble PtrEnsemble;

/**
 * A complex field on the configuration's grid.
 */
typedef struct PtrField PtrField;

/**
 * Derived parameters of a configuration. Infinite values mean "no
 * scattering".
 */
typedef struct PtrDerived {
  double r_0;
  double l_sca;
  double depth;
  double r_tr;
  double alpha_l;
  double b_max;
  double r_max;
  double snr_closed_form;
} PtrDerived;

/**
 * Peak / background intensities and their ratio. `snr` is +infinity
 * without scattering.
 */
typedef struct PtrSnr {
  double peak_intensity;
  double background_intensity;
  double snr;
  double snr_closed_form;
} PtrSnr;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ptr_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t ptr_last_error_message(char *buf, uintptr_t len);

/**
 * Parses config text (the `key = value` format) into a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PtrStatus ptr_config_parse(const char *text, struct PtrConfig **out);

/**
 * Loads a config file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PtrStatus ptr_config_load(const char *path, struct PtrConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from `ptr_config_parse` / `ptr_config_load`
 * that has not been freed.
 */
void ptr_config_free(struct PtrConfig *cfg);

/**
 * Grid points per axis of the configuration.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum PtrStatus ptr_config_grid_n(const struct PtrConfig *cfg, uintptr_t *out);

/**
 * Derived parameters (mirror radius, mean free path, focal width, shift
 * limits, closed-form SNR).
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum PtrStatus ptr_config_derived(const struct PtrConfig *cfg, struct PtrDerived *out);

/**
 * Runs both legs of the experiment through medium realization `index`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum PtrStatus ptr_simulate(const struct PtrConfig *cfg, uint64_t index, struct PtrField **out);

/**
 * # Safety
 * `field` must be null or a live field handle.
 */
void ptr_field_free(struct PtrField *field);

/**
 * Copies the field into `buf` (`2 n^2` doubles).
 *
 * # Safety
 * `field` must be a live field handle; `buf` must point to `len` doubles.
 */
enum PtrStatus ptr_field_copy(const struct PtrField *field, double *buf, uintptr_t len);

/**
 * Runs `n >= 2` realizations with the default probe set.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum PtrStatus ptr_ensemble_run(const struct PtrConfig *cfg, uintptr_t n, struct PtrEnsemble **out);

/**
 * # Safety
 * `ens` must be null or a live ensemble handle.
 */
void ptr_ensemble_free(struct PtrEnsemble *ens);

/**
 * Ensemble mean field into `buf` (`2 n^2` doubles).
 *
 * # Safety
 * `ens` must be a live ensemble handle; `buf` must point to `len` doubles.
 */
enum PtrStatus ptr_ensemble_mean(const struct PtrEnsemble *ens, double *buf, uintptr_t len);

/**
 * Ensemble variance `E|u - E u|^2` into `buf` as `(var, 0)` pairs.
 *
 * # Safety
 * `ens` must be a live ensemble handle; `buf` must point to `len` doubles.
 */
enum PtrStatus ptr_ensemble_variance(const struct PtrEnsemble *ens, double *buf, uintptr_t len);

/**
 * Limit mean refocused field at offset `(x1, x2)` from the source, with the
 * configuration's linear phase.
 *
 * # Safety
 * `cfg` must be a live config handle; `re` and `im` must be writable.
 */
enum PtrStatus ptr_moments_mean(const struct PtrConfig *cfg,
                                double x1,
                                double x2,
                                double *re,
                                double *im);

/**
 * Peak and background intensities and the SNR for a centered source.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum PtrStatus ptr_moments_snr(const struct PtrConfig *cfg, struct PtrSnr *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARAXIAL_TR_H */
