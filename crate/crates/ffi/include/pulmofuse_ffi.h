#ifndef PULMOFUSE_FFI_H
#define PULMOFUSE_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_IO = 2,
  PF_STATUS_FORMAT = 3,
  PF_STATUS_INVALID_ARGUMENT = 4,
  PF_STATUS_SHAPE_MISMATCH = 5,
  PF_STATUS_EMPTY = 6,
  PF_STATUS_PANIC = 7,
} PfStatus;

typedef enum PfElementKind {
  PF_ELEMENT_KIND_U8 = 0,
  PF_ELEMENT_KIND_I16 = 1,
  PF_ELEMENT_KIND_F32 = 2,
} PfElementKind;

// A voxel volume plus the NIfTI header it was read with, if any.
typedef struct PfVolume PfVolume;

// Region-wise dice scores of one case.
typedef struct PfDiceReport {
  double overall_dice;
  double main_dice;
  double branch_dice;
  double multi_level_dice;
  double w_branch;
  double w_main;
} PfDiceReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pf_version(void);

// Message of the last failure on this thread, or NULL if none. The string
// stays valid until the next failing call on the same thread.
const char *pf_last_error_message(void);

// Read a `.nii` or `.nii.gz` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PfStatus pf_volume_read(const char *path, struct PfVolume **out);

// Write a volume; gzip is chosen by a `.gz` suffix. Header fields not
// determined by the volume come from the file it was derived from.
//
// # Safety
// `vol` must be a live handle and `path` a NUL-terminated string.
enum PfStatus pf_volume_write(const struct PfVolume *vol, const char *path);

// Build a float-32 volume from `nx*ny*nz` values, x fastest.
//
// # Safety
// `spacing` must point to 3 doubles and `data` to `nx*ny*nz` floats.
enum PfStatus pf_volume_from_f32(size_t nx,
                                 size_t ny,
                                 size_t nz,
                                 const double *spacing,
                                 const float *data,
                                 struct PfVolume **out);

// Build an 8-bit volume from `nx*ny*nz` values, x fastest.
//
// # Safety
// `spacing` must point to 3 doubles and `data` to `nx*ny*nz` bytes.
enum PfStatus pf_volume_from_u8(size_t nx,
                                size_t ny,
                                size_t nz,
                                const double *spacing,
                                const uint8_t *data,
                                struct PfVolume **out);

// Shape into `out_shape[3]` and spacing (mm) into `out_spacing[3]`;
// either may be NULL.
//
// # Safety
// `vol` must be a live handle; non-NULL outputs must hold 3 elements.
enum PfStatus pf_volume_shape(const struct PfVolume *vol, size_t *out_shape, double *out_spacing);

// # Safety
// `vol` must be a live handle and `out` writable.
enum PfStatus pf_volume_kind(const struct PfVolume *vol, enum PfElementKind *out);

// Copy all voxels, converted to float, into `out[len]`. `len` must equal
// the voxel count.
//
// # Safety
// `vol` must be a live handle and `out` must hold `len` floats.
enum PfStatus pf_volume_copy_f32(const struct PfVolume *vol, float *out, size_t len);

// Release a handle. NULL is ignored.
//
// # Safety
// `vol` must be NULL or a handle not yet freed.
void pf_volume_free(struct PfVolume *vol);

// Weights `d_i / sum(d)` for `n` positive scores, written to `out[n]`.
//
// # Safety
// `scores` and `out` must each hold `n` doubles.
enum PfStatus pf_compute_weights(const double *scores, size_t n, double *out);

// Weighted soft fusion `sum w_i P_i` as a float-32 volume. Weights must
// sum to 1.
//
// # Safety
// `preds` must hold `n` live handles and `weights` `n` doubles.
enum PfStatus pf_fuse(const struct PfVolume *const *preds,
                      const double *weights,
                      size_t n,
                      struct PfVolume **out);

// Weighted fusion thresholded at 0.5 (inclusive) as an 8-bit mask.
//
// # Safety
// `preds` must hold `n` live handles and `weights` `n` doubles.
enum PfStatus pf_fuse_and_binarize(const struct PfVolume *const *preds,
                                   const double *weights,
                                   size_t n,
                                   struct PfVolume **out);

// Largest connected component (connectivity 6, 18 or 26).
//
// # Safety
// `mask` must be a live handle and `out` writable.
enum PfStatus pf_largest_component(const struct PfVolume *mask,
                                   uint32_t connectivity,
                                   struct PfVolume **out);

// Region labels 0 background, 1 main trunk, 2 branch.
//
// # Safety
// `mask` must be a live handle and `out` writable.
enum PfStatus pf_decompose(const struct PfVolume *mask, double alpha, struct PfVolume **out);

// # Safety
// `a` and `b` must be live handles and `out` writable.
enum PfStatus pf_dice(const struct PfVolume *a, const struct PfVolume *b, double *out);

// Multi-level dice with branch weight in (0.5, 1).
//
// # Safety
// `pred`, `gt` and `regions` must be live handles and `out` writable.
enum PfStatus pf_multi_level_dice(const struct PfVolume *pred,
                                  const struct PfVolume *gt,
                                  const struct PfVolume *regions,
                                  double w_branch,
                                  struct PfDiceReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULMOFUSE_FFI_H */
