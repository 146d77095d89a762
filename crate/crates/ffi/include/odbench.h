#ifndef ODBENCH_H
#define ODBENCH_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OdbStatus {
  ODB_STATUS_OK = 0,
  ODB_STATUS_PARSE = 1,
  ODB_STATUS_VALIDATION = 2,
  ODB_STATUS_INTEGRITY = 3,
  ODB_STATUS_SHAPE = 4,
  ODB_STATUS_DECODE = 5,
  ODB_STATUS_ARGUMENT = 6,
  ODB_STATUS_UNDEFINED_METRIC = 7,
  ODB_STATUS_NUMERIC = 8,
  ODB_STATUS_RESOLUTION = 9,
  ODB_STATUS_IO = 10,
  ODB_STATUS_NULL_POINTER = 11,
  ODB_STATUS_PANIC = 12,
} OdbStatus;

/**
 * Annotation formats accepted by `odb_dataset_load`.
 */
typedef enum OdbFormat {
  ODB_FORMAT_COCO = 0,
  ODB_FORMAT_VOC_XML = 1,
} OdbFormat;

typedef struct OdbDataset OdbDataset;

typedef struct OdbDetections OdbDetections;

typedef struct OdbImage OdbImage;

/**
 * Detection metrics in percent.
 */
typedef struct OdbMetrics {
  double map;
  double ap_loc;
  double csr;
} OdbMetrics;

/**
 * Per-image perceptual distances; `psnr` is `+inf` for identical images.
 */
typedef struct OdbPerceptual {
  uint64_t l0;
  double l1;
  double l2;
  double linf;
  double psnr;
  double ssim;
} OdbPerceptual;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *odb_last_error(void);

/**
 * Static, NUL-terminated library version.
 */
const char *odb_version(void);

/**
 * Parses ground truth; `format` is an [`OdbFormat`] value.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OdbStatus odb_dataset_load(const char *path, uint32_t format, struct OdbDataset **out);

/**
 * # Safety
 * `ds` must come from [`odb_dataset_load`] and not be used afterwards.
 */
void odb_dataset_free(struct OdbDataset *ds);

/**
 * Number of images, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t odb_dataset_image_count(const struct OdbDataset *ds);

/**
 * Number of classes, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t odb_dataset_class_count(const struct OdbDataset *ds);

/**
 * Loads a COCO results file against `ds`.
 *
 * # Safety
 * `ds` must be a live dataset, `path` a NUL-terminated string, `out` valid.
 */
enum OdbStatus odb_detections_load(const struct OdbDataset *ds,
                                   const char *path,
                                   struct OdbDetections **out);

/**
 * # Safety
 * `dets` must come from [`odb_detections_load`] and not be used afterwards.
 */
void odb_detections_free(struct OdbDetections *dets);

/**
 * mAP, AP_loc and CSR at `iou_threshold`, difficult objects ignored.
 *
 * # Safety
 * Handles must be live; `out` must be valid.
 */
enum OdbStatus odb_evaluate(const struct OdbDataset *ds,
                            const struct OdbDetections *dets,
                            double iou_threshold,
                            struct OdbMetrics *out);

/**
 * `100 (benign - attacked) / benign`.
 *
 * # Safety
 * `out` must be valid.
 */
enum OdbStatus odb_relative_drop(double benign, double attacked, double *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum OdbStatus odb_image_load(const char *path, struct OdbImage **out);

/**
 * Copies `len` bytes of interleaved RGB; `len` must be `width * height * 3`.
 *
 * # Safety
 * `rgb` must point to `len` readable bytes and `out` be valid.
 */
enum OdbStatus odb_image_from_rgb(uint32_t width,
                                  uint32_t height,
                                  const uint8_t *rgb,
                                  size_t len,
                                  struct OdbImage **out);

/**
 * # Safety
 * `img` must come from this library and not be used afterwards.
 */
void odb_image_free(struct OdbImage *img);

/**
 * # Safety
 * `img` must be NULL or a live image handle.
 */
uint32_t odb_image_width(const struct OdbImage *img);

/**
 * # Safety
 * `img` must be NULL or a live image handle.
 */
uint32_t odb_image_height(const struct OdbImage *img);

/**
 * Distances between two images of equal size. SSIM needs at least 11x11.
 *
 * # Safety
 * Handles must be live; `out` must be valid.
 */
enum OdbStatus odb_perceptual(const struct OdbImage *clean,
                              const struct OdbImage *adv,
                              struct OdbPerceptual *out);

/**
 * LPIPS between two PFEAT files; `weights` may be NULL for all-ones weights.
 *
 * # Safety
 * Paths must be NUL-terminated strings (or NULL for `weights`); `out` valid.
 */
enum OdbStatus odb_lpips_files(const char *clean,
                               const char *adv,
                               const char *weights,
                               double *out);

/**
 * Runs a benchmark manifest and writes report.csv, report.md, report.json and
 * plotdata.csv into `out_dir`. `workers` of 0 means one per logical core.
 * Failed conditions are listed in the report; the call still returns OK.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum OdbStatus odb_benchmark_run(const char *manifest, size_t workers, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODBENCH_H */
