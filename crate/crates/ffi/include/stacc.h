#ifndef STACC_H
#define STACC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum StaccDecayFamily {
  STACC_DECAY_FAMILY_POWER = 0,
  STACC_DECAY_FAMILY_EXPONENTIAL = 1,
  STACC_DECAY_FAMILY_GAUSSIAN = 2,
} StaccDecayFamily;

/**
 * Result code of every exported function.
 */
typedef enum StaccStatus {
  STACC_STATUS_OK = 0,
  STACC_STATUS_NULL_POINTER = 1,
  STACC_STATUS_INVALID_ARGUMENT = 2,
  STACC_STATUS_IO = 3,
  STACC_STATUS_FORMAT = 4,
  STACC_STATUS_OUT_OF_RANGE = 5,
  /**
   * The queried location or value is a no-data sentinel.
   */
  STACC_STATUS_NO_DATA = 6,
  STACC_STATUS_VALIDATION = 7,
  STACC_STATUS_COMPUTE = 8,
  STACC_STATUS_BUFFER_TOO_SMALL = 9,
  STACC_STATUS_PANIC = 10,
} StaccStatus;

/**
 * A loaded space-time cube.
 */
typedef struct StaccCube StaccCube;

/**
 * A triangle mesh extracted from a cube.
 */
typedef struct StaccMesh StaccMesh;

typedef struct StaccFrictionFit {
  double beta;
  double intercept;
  double r_squared;
  uintptr_t n_used;
  uintptr_t n_excluded;
} StaccFrictionFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *stacc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *stacc_version(void);

/**
 * Opens an STCUBE01 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum StaccStatus stacc_cube_open(const char *path, struct StaccCube **out);

/**
 * Releases a cube. Null is accepted.
 *
 * # Safety
 * `cube` must come from [`stacc_cube_open`] and not be used afterwards.
 */
void stacc_cube_free(struct StaccCube *cube);

/**
 * # Safety
 * `cube` must be a live handle; the out pointers must be writable.
 */
enum StaccStatus stacc_cube_dims(const struct StaccCube *cube,
                                 uintptr_t *nx,
                                 uintptr_t *ny,
                                 uintptr_t *nt);

/**
 * Geographic placement: lower-left corner of cell (0, 0) and cell size.
 *
 * # Safety
 * `cube` must be a live handle; the out pointers must be writable.
 */
enum StaccStatus stacc_cube_geometry(const struct StaccCube *cube,
                                     double *origin_x,
                                     double *origin_y,
                                     double *cell_size);

/**
 * Value of one voxel. Returns `NoData` for the sentinel.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be writable.
 */
enum StaccStatus stacc_cube_value(const struct StaccCube *cube,
                                  uintptr_t x,
                                  uintptr_t y,
                                  uintptr_t t,
                                  float *out);

/**
 * Trilinear sample at fractional lattice coordinates.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be writable.
 */
enum StaccStatus stacc_cube_sample(const struct StaccCube *cube,
                                   double x,
                                   double y,
                                   double t,
                                   double *out);

/**
 * Percentile `p` in [0, 100] of the valid voxel values.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be writable.
 */
enum StaccStatus stacc_cube_percentile(const struct StaccCube *cube, double p, double *out);

/**
 * Extracts the isosurface at `isovalue`, in lattice coordinates.
 *
 * # Safety
 * `cube` must be a live handle; `out` must be writable.
 */
enum StaccStatus stacc_mesh_extract(const struct StaccCube *cube,
                                    double isovalue,
                                    struct StaccMesh **out);

/**
 * Releases a mesh. Null is accepted.
 *
 * # Safety
 * `mesh` must come from [`stacc_mesh_extract`] and not be used afterwards.
 */
void stacc_mesh_free(struct StaccMesh *mesh);

/**
 * # Safety
 * `mesh` must be a live handle; the out pointers must be writable.
 */
enum StaccStatus stacc_mesh_counts(const struct StaccMesh *mesh,
                                   uintptr_t *vertices,
                                   uintptr_t *triangles);

/**
 * Copies vertex coordinates as `x0 y0 t0 x1 y1 t1 ...`; `len` counts
 * doubles and must be at least three per vertex.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum StaccStatus stacc_mesh_copy_vertices(const struct StaccMesh *mesh, double *buf, uintptr_t len);

/**
 * Copies triangle vertex indices, three per triangle.
 *
 * # Safety
 * `buf` must point to `len` writable `uint32_t`.
 */
enum StaccStatus stacc_mesh_copy_triangles(const struct StaccMesh *mesh,
                                           uint32_t *buf,
                                           uintptr_t len);

/**
 * Distance-decay weight. `reachable = false` yields 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum StaccStatus stacc_decay_weight(enum StaccDecayFamily family,
                                    double beta,
                                    double floor,
                                    double distance,
                                    bool reachable,
                                    double *out);

/**
 * Spreads `n` interval counts over 24 hourly bins written to `out_hours`.
 *
 * # Safety
 * The three input arrays hold `n` elements; `out_hours` holds 24.
 */
enum StaccStatus stacc_disaggregate(const uint32_t *start_minutes,
                                    const uint32_t *end_minutes,
                                    const double *counts,
                                    uintptr_t n,
                                    double *out_hours);

/**
 * Fits the power-law friction coefficient from `n` flow records, each
 * given as commuters, origin demand, destination supply and distance.
 * A negative distance marks an unreachable pair.
 *
 * # Safety
 * The four input arrays hold `n` elements; `out` must be writable.
 */
enum StaccStatus stacc_fit_friction(const double *commuters,
                                    const double *demand,
                                    const double *supply,
                                    const double *distance,
                                    uintptr_t n,
                                    double floor,
                                    struct StaccFrictionFit *out);

/**
 * Runs every pipeline stage for a TOML configuration. Artifacts and
 * `report.json` land in the configured output directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum StaccStatus stacc_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STACC_H */
