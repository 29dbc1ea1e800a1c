#ifndef SASEGAN_H
#define SASEGAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_ARGUMENT = 2,
  SG_STATUS_IO = 3,
  SG_STATUS_FORMAT = 4,
  SG_STATUS_CONFIG = 5,
  SG_STATUS_CHECKPOINT = 6,
  SG_STATUS_SHAPE = 7,
  SG_STATUS_METRIC = 8,
  SG_STATUS_PANIC = 9,
} SgStatus;

/*
 Opaque trained generator.
 */
typedef struct SgGenerator SgGenerator;

typedef struct SgFootprint {
  size_t layer;
  size_t time_dim;
  size_t raw_map_elems;
  size_t pooled_keys;
  size_t pooled_map_elems;
} SgFootprint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a
 success. The pointer stays valid until the next call on the thread.
 */
const char *sg_last_error(void);

/*
 Load the generator from a training checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out_handle` must be writable.
 */
enum SgStatus sg_generator_load(const char *path, struct SgGenerator **out_handle);

/*
 Release a handle. Null is ignored.

 # Safety
 `handle` must come from [`sg_generator_load`] and not be used again.
 */
void sg_generator_free(struct SgGenerator *handle);

/*
 Window length, in samples, the generator processes at a time.

 # Safety
 `handle` must be a live handle; `out_len` must be writable.
 */
enum SgStatus sg_generator_window(const struct SgGenerator *handle, size_t *out_len);

/*
 Enhance `len` samples of 16 kHz audio in [-1, 1] into `output`
 (same length). Latents are drawn from a stream seeded by `seed`.

 # Safety
 `input` and `output` must each hold `len` doubles.
 */
enum SgStatus sg_enhance(const struct SgGenerator *handle,
                         const double *input,
                         size_t len,
                         uint64_t seed,
                         double *output);

/*
 Segmental SNR in dB of `test` against `clean`, both 16 kHz.

 # Safety
 `clean` and `test` must each hold `len` doubles.
 */
enum SgStatus sg_ssnr(const double *clean, const double *test, size_t len, double *out_db);

/*
 STOI in [0, 1] of `test` against `clean` at `sample_rate` Hz.

 # Safety
 `clean` and `test` must each hold `len` doubles.
 */
enum SgStatus sg_stoi(const double *clean,
                      const double *test,
                      size_t len,
                      uint32_t sample_rate,
                      double *out_score);

/*
 Attention-map memory at encoder `layer` for windows of `input_len`
 samples and key pooling `p`.

 # Safety
 `out_fp` must be writable.
 */
enum SgStatus sg_attn_footprint(size_t input_len,
                                size_t layer,
                                size_t p,
                                struct SgFootprint *out_fp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SASEGAN_H */
