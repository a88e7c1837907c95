/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef RIDGEMARK_H
#define RIDGEMARK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_ARGUMENT = 2,
  RM_STATUS_DECODE_ERROR = 3,
  RM_STATUS_INVALID_RECORD = 4,
  RM_STATUS_OUT_OF_RANGE = 5,
  RM_STATUS_BUFFER_TOO_SMALL = 6,
  RM_STATUS_MATCH_ERROR = 7,
  RM_STATUS_PANIC = 99,
} RmStatus;

// Opaque record handle.
typedef struct RmRecord RmRecord;

typedef struct RmRecordInfo {
  uint16_t image_width;
  uint16_t image_height;
  uint16_t resolution_x;
  uint16_t resolution_y;
  size_t view_count;
} RmRecordInfo;

// `kind`: 0 other, 1 ridge ending, 2 bifurcation.
typedef struct RmMinutia {
  uint8_t kind;
  uint16_t x;
  uint16_t y;
  uint8_t angle_units;
  uint8_t quality;
} RmMinutia;

typedef struct RmMatcherParams {
  double distance_tolerance;
  double angle_tolerance;
  size_t min_overlap;
} RmMatcherParams;

typedef struct RmMatchResult {
  double score;
  size_t paired_count;
} RmMatchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *rm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rm_version(void);

// Parse `len` bytes into a new record stored in `*out`.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum RmStatus rm_record_decode(const uint8_t *bytes, size_t len, struct RmRecord **out);

// New record with one empty view for a `width`×`height` image at `dpi`.
//
// # Safety
// `out` must be writable.
enum RmStatus rm_record_new(uint16_t width,
                            uint16_t height,
                            uint32_t dpi,
                            uint8_t finger_position,
                            struct RmRecord **out);

// Release a record. NULL is ignored.
//
// # Safety
// `record` must come from this library and not be used afterwards.
void rm_record_free(struct RmRecord *record);

// # Safety
// `record` must be a live handle; `out` must be writable.
enum RmStatus rm_record_info(const struct RmRecord *record, struct RmRecordInfo *out);

// # Safety
// `record` must be a live handle; `out` must be writable.
enum RmStatus rm_record_minutiae_count(const struct RmRecord *record, size_t view, size_t *out);

// # Safety
// `record` must be a live handle; `out` must be writable.
enum RmStatus rm_record_minutia(const struct RmRecord *record,
                                size_t view,
                                size_t index,
                                struct RmMinutia *out);

// Append a minutia to a view. Bounds are checked when the record is encoded
// or validated.
//
// # Safety
// `record` must be a live handle; `minutia` must be readable.
enum RmStatus rm_record_add_minutia(struct RmRecord *record,
                                    size_t view,
                                    const struct RmMinutia *minutia);

// Number of invariant violations in `*out`; the first is described by
// `rm_last_error_message` when nonzero.
//
// # Safety
// `record` must be a live handle; `out` must be writable.
enum RmStatus rm_record_validate(const struct RmRecord *record, bool strict, size_t *out);

// Serialize into `buf` of `capacity` bytes. `*written` receives the record
// length; with `BufferTooSmall` it is the capacity needed. `buf` may be
// NULL to query the length.
//
// # Safety
// `record` must be a live handle; `buf` must hold `capacity` writable
// bytes when not NULL; `written` must be writable.
enum RmStatus rm_record_encode(const struct RmRecord *record,
                               uint8_t *buf,
                               size_t capacity,
                               size_t *written);

struct RmMatcherParams rm_matcher_params_default(void);

// Score `probe` against `reference` (first views). `params` may be NULL for
// the defaults.
//
// # Safety
// Both records must be live handles; `params` must be NULL or readable;
// `out` must be writable.
enum RmStatus rm_match(const struct RmRecord *reference,
                       const struct RmRecord *probe,
                       const struct RmMatcherParams *params,
                       struct RmMatchResult *out);

// 95% Wald interval for a proportion `p` over `n` trials, clamped to [0, 1].
//
// # Safety
// `low` and `high` must be writable.
enum RmStatus rm_binomial_ci(double p, size_t n, double *low, double *high);

// Degrees in [0, 360) to 1.40625-degree units.
//
// # Safety
// `out` must be writable.
enum RmStatus rm_quantize_angle(double degrees, uint8_t *out);

double rm_dequantize_angle(uint8_t units);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIDGEMARK_H */
