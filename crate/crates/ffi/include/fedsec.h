#ifndef FEDSEC_H
#define FEDSEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum FdsStatus {
  FDS_STATUS_OK = 0,
  FDS_STATUS_NULL_POINTER = 1,
  FDS_STATUS_INVALID_ARGUMENT = 2,
  FDS_STATUS_DIMENSION_MISMATCH = 3,
  FDS_STATUS_DECODE_FAILED = 4,
  FDS_STATUS_CONFIG_INVALID = 5,
  FDS_STATUS_RUNTIME_FAILED = 6,
  FDS_STATUS_BUFFER_TOO_SMALL = 7,
  FDS_STATUS_PANIC = 8,
} FdsStatus;

/**
 * Kind of an [`FdsMessage`], matching the frame type byte.
 */
typedef enum FdsMessageKind {
  FDS_MESSAGE_KIND_BROADCAST = 1,
  FDS_MESSAGE_KIND_DENSE_UPDATE = 2,
  FDS_MESSAGE_KIND_SHUTDOWN = 3,
  FDS_MESSAGE_KIND_SPARSE_UPDATE = 4,
} FdsMessageKind;

/**
 * Owned byte buffer returned by the library.
 */
typedef struct FdsBuffer FdsBuffer;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct FdsConfig FdsConfig;

/**
 * A decoded wire message.
 */
typedef struct FdsMessage FdsMessage;

/**
 * Result of a completed run.
 */
typedef struct FdsReport FdsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length in bytes, excluding the terminator. `buf` may be null when
 * `len` is 0.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
size_t fds_last_error_message(char *buf, size_t len);

/**
 * Weighted sum of `n` row-major vectors of length `dim` into `out`.
 * `weights` must be non-negative and sum to 1.
 *
 * # Safety
 * `vectors` holds `n * dim` values, `weights` holds `n`, `out` has room
 * for `dim`.
 */
enum FdsStatus fds_aggregate(const double *vectors,
                             size_t n,
                             size_t dim,
                             const double *weights,
                             double *out);

/**
 * Sum of squared distances from `n` vectors to `global`.
 *
 * # Safety
 * `vectors` holds `n * dim` values, `global` holds `dim`.
 */
enum FdsStatus fds_sync_error(const double *vectors,
                              size_t n,
                              size_t dim,
                              const double *global,
                              double *out);

/**
 * Scales `theta` down to L2 norm at most `clip_norm`, writing to `out`.
 *
 * # Safety
 * `theta` holds `dim` values and `out` has room for `dim`.
 */
enum FdsStatus fds_clip(const double *theta, size_t dim, double clip_norm, double *out);

/**
 * Per-round privacy loss of the Gaussian mechanism.
 *
 * # Safety
 * `out` must be writable.
 */
enum FdsStatus fds_epsilon(double sigma, double clip_norm, double delta, double *out);

/**
 * Parses a TOML experiment configuration.
 *
 * # Safety
 * `text` is a NUL-terminated UTF-8 string; `out` is writable.
 */
enum FdsStatus fds_config_from_toml(const char *text, struct FdsConfig **out);

/**
 * Overrides the seed of a configuration.
 *
 * # Safety
 * `cfg` is a live handle.
 */
enum FdsStatus fds_config_set_seed(struct FdsConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` is null or a handle not yet freed.
 */
void fds_config_free(struct FdsConfig *cfg);

/**
 * Runs an experiment to completion.
 *
 * # Safety
 * `cfg` is a live handle; `out` is writable.
 */
enum FdsStatus fds_run(const struct FdsConfig *cfg, struct FdsReport **out);

/**
 * Writes the report's CSV files and resolved config into `dir`.
 *
 * # Safety
 * Handles are live; `dir` is a NUL-terminated UTF-8 path.
 */
enum FdsStatus fds_report_write(const struct FdsReport *report,
                                const struct FdsConfig *cfg,
                                const char *dir);

/**
 * Final test accuracy, false-positive and false-negative rates. An
 * undefined rate is reported as NaN.
 *
 * # Safety
 * `report` is a live handle; the outputs are writable.
 */
enum FdsStatus fds_report_metrics(const struct FdsReport *report,
                                  double *accuracy,
                                  double *fpr,
                                  double *fnr);

/**
 * Number of metric rows, including the initial model's.
 *
 * # Safety
 * `report` is a live handle; `out` is writable.
 */
enum FdsStatus fds_report_row_count(const struct FdsReport *report, size_t *out);

/**
 * Copies the final parameters into `out`. `dim_out` receives the
 * parameter count; if `len` is smaller nothing is copied and
 * `FDS_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `report` is a live handle; `out` has room for `len` values.
 */
enum FdsStatus fds_report_theta(const struct FdsReport *report,
                                double *out,
                                size_t len,
                                size_t *dim_out);

/**
 * # Safety
 * `report` is null or a handle not yet freed.
 */
void fds_report_free(struct FdsReport *report);

/**
 * Decodes one complete frame.
 *
 * # Safety
 * `bytes` holds `len` readable bytes; `out` is writable.
 */
enum FdsStatus fds_message_decode(const uint8_t *bytes, size_t len, struct FdsMessage **out);

/**
 * Builds a global-model broadcast.
 *
 * # Safety
 * `theta` holds `dim` values; `out` is writable.
 */
enum FdsStatus fds_message_broadcast(uint32_t round,
                                     const double *theta,
                                     size_t dim,
                                     struct FdsMessage **out);

/**
 * # Safety
 * `msg` is a live handle; `out` is writable.
 */
enum FdsStatus fds_message_kind(const struct FdsMessage *msg, enum FdsMessageKind *out);

/**
 * Encodes a message into a new buffer.
 *
 * # Safety
 * `msg` is a live handle; `out` is writable.
 */
enum FdsStatus fds_message_encode(const struct FdsMessage *msg, struct FdsBuffer **out);

/**
 * # Safety
 * `msg` is null or a handle not yet freed.
 */
void fds_message_free(struct FdsMessage *msg);

/**
 * Start of the buffer's bytes; valid until the buffer is freed.
 *
 * # Safety
 * `buf` is a live handle.
 */
const uint8_t *fds_buffer_data(const struct FdsBuffer *buf);

/**
 * # Safety
 * `buf` is null or a live handle.
 */
size_t fds_buffer_len(const struct FdsBuffer *buf);

/**
 * # Safety
 * `buf` is null or a handle not yet freed.
 */
void fds_buffer_free(struct FdsBuffer *buf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSEC_H */
