#ifndef XYNOISE_H
#define XYNOISE_H

/* Generated from the xynoise-capi crate sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum XyStatus {
  XY_OK = 0,
  XY_INVALID_ARGUMENT = 1,
  XY_NUMERICAL = 2,
  XY_INSUFFICIENT_DATA = 3,
  XY_NULL_POINTER = 4,
  XY_BUFFER_TOO_SMALL = 5,
} XyStatus;

// Opaque sweep configuration handle.
typedef struct XyConfig XyConfig;

// Opaque response-curve handle.
typedef struct XyCurve XyCurve;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread; empty string
// when the last call succeeded. Valid until the next API call on the same
// thread.
const char *xy_last_error(void);

// Library version as a static NUL-terminated string.
const char *xy_version(void);

// New sweep configuration for a catalog preparation (or e/g product label)
// with noise applied to the given 1-based qubits. Chain parameters default
// to the reference set for the preparation's length; grid, budget, step and
// threshold default like the CLI. Returns NULL on error.
//
// # Safety
// `preparation` must be a NUL-terminated string; `placement` must point to
// `placement_len` readable u32 values.
struct XyConfig *xy_config_new(const char *preparation,
                               const uint32_t *placement,
                               uintptr_t placement_len);

// Replace the chain parameters (couplings given as Jx, Jy).
//
// # Safety
// `config` must be a live handle from `xy_config_new`.
enum XyStatus xy_config_set_chain(struct XyConfig *config,
                                  uint32_t n_qubits,
                                  double jx,
                                  double jy,
                                  double omega0,
                                  double gamma,
                                  double nbar,
                                  bool periodic);

// Replace the noise-strength grid (must start at 0, strictly increasing).
//
// # Safety
// `config` must be live; `grid` must point to `len` readable doubles.
enum XyStatus xy_config_set_grid(struct XyConfig *config, const double *grid, uintptr_t len);

// Set the integration budget, output step and concurrence threshold.
//
// # Safety
// `config` must be a live handle.
enum XyStatus xy_config_set_integration(struct XyConfig *config,
                                        double t_max,
                                        double dt,
                                        double epsilon);

// # Safety
// `config` must come from `xy_config_new` and not have been freed.
void xy_config_free(struct XyConfig *config);

// Run the sweep; returns a curve handle, or NULL on error.
//
// # Safety
// `config` must be a live handle.
struct XyCurve *xy_run_sweep(const struct XyConfig *config);

// Number of grid points in the curve.
//
// # Safety
// `curve` must be a live handle (NULL returns 0).
uintptr_t xy_curve_len(const struct XyCurve *curve);

// Read one sweep point.
//
// # Safety
// `curve` must be live; non-null out-pointers must be writable.
enum XyStatus xy_curve_point(const struct XyCurve *curve,
                             uintptr_t index,
                             double *m_out,
                             double *response_out,
                             bool *censored_out);

// Classify the curve and write the snake_case label (NUL-terminated) into
// `label_out`.
//
// # Safety
// `curve` must be live; `label_out` must have `label_cap` writable bytes.
enum XyStatus xy_classify(const struct XyCurve *curve,
                          double rel_tol,
                          char *label_out,
                          uintptr_t label_cap);

// # Safety
// `curve` must come from `xy_run_sweep` and not have been freed.
void xy_curve_free(struct XyCurve *curve);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* XYNOISE_H */
