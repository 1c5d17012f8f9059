#ifndef SATD_LINK_H
#define SATD_LINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SatdStatus {
  SATD_STATUS_OK = 0,
  SATD_STATUS_NULL_ARGUMENT = 1,
  SATD_STATUS_INVALID_UTF8 = 2,
  SATD_STATUS_IO = 3,
  SATD_STATUS_MODEL_FORMAT = 4,
  SATD_STATUS_NOT_TRAINED = 5,
  SATD_STATUS_INVALID_ARGUMENT = 6,
  SATD_STATUS_INTERNAL = 7,
} SatdStatus;

// Opaque handle to a loaded relation classifier.
typedef struct SatdModel SatdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread; do not free.
const char *satd_last_error_message(void);

// Library version as a static string.
const char *satd_version(void);

// Loads a model file written by `satd-link train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for a pointer write.
enum SatdStatus satd_model_load(const char *path, struct SatdModel **out);

// Loads a model from an in-memory copy of a model file.
//
// # Safety
// `bytes` must be valid for `len` bytes and `out` valid for a pointer write.
enum SatdStatus satd_model_from_bytes(const uint8_t *bytes, uintptr_t len, struct SatdModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from a `satd_model_*` loader that has not
// been freed yet.
void satd_model_free(struct SatdModel *model);

// Classifies one (origin, target) text pair. `label` receives 0 (none),
// 1 (duplication) or 2 (repayment); `probabilities` receives three values in
// the same order and may be null.
//
// # Safety
// `model` must be a live handle, the texts NUL-terminated, `label` valid for
// a write and `probabilities` null or valid for three writes.
enum SatdStatus satd_model_predict_pair(const struct SatdModel *model,
                                        const char *origin,
                                        const char *target,
                                        uint32_t *label,
                                        double *probabilities);

// Term-frequency cosine similarity of two texts under the default tokenizer.
//
// # Safety
// The texts must be NUL-terminated and `out` valid for a write.
enum SatdStatus satd_cosine_similarity(const char *a, const char *b, double *out);

// Cohen's kappa of two label sequences of length `len`.
//
// # Safety
// `a` and `b` must be valid for `len` reads and `out` valid for a write.
enum SatdStatus satd_cohens_kappa(const uint32_t *a, const uint32_t *b, uintptr_t len, double *out);

// JSON array of the built-in SATD keyword patterns found in `text`.
//
// # Safety
// `text` must be NUL-terminated and `out` valid for a pointer write.
enum SatdStatus satd_detect_keywords(const char *input, char **out);

// JSON array of the `#N`, commit-hash and `KEY-N` references in `text`,
// each with `kind`, `raw`, `normalized` and a byte `span`.
//
// # Safety
// `text` must be NUL-terminated and `out` valid for a pointer write.
enum SatdStatus satd_extract_references(const char *input, char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library that has not been freed.
void satd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SATD_LINK_H */
