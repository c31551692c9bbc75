#ifndef PORFLOW_H
#define PORFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PorflowStatus {
  PORFLOW_STATUS_OK = 0,
  PORFLOW_STATUS_NULL_POINTER = 1,
  PORFLOW_STATUS_INVALID_ARGUMENT = 2,
  PORFLOW_STATUS_CONFIG = 3,
  PORFLOW_STATUS_MESH = 4,
  PORFLOW_STATUS_SOLVER = 5,
  PORFLOW_STATUS_BUFFER_TOO_SMALL = 6,
  PORFLOW_STATUS_FINISHED = 7,
  PORFLOW_STATUS_PANIC = 8,
} PorflowStatus;

/**
 * Primal mesh with its dual.
 */
typedef struct PorflowMesh PorflowMesh;

/**
 * A simulation configured from an INI file, advanced step by step.
 */
typedef struct PorflowSimulation PorflowSimulation;

/**
 * Assembled stiffness matrix for a constant permeability.
 */
typedef struct PorflowStiffness PorflowStiffness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (nul-terminated,
 * truncated to `len`) and returns the full message length excluding the
 * terminator, or 0 when no error has occurred.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t porflow_last_error(char *buf, size_t len);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum PorflowStatus porflow_mesh_load(const char *path, struct PorflowMesh **out);

/**
 * # Safety
 * `mesh` must be null or a handle from [`porflow_mesh_load`] not yet freed.
 */
void porflow_mesh_free(struct PorflowMesh *mesh);

/**
 * Number of sides, which is also the number of dual volumes.
 *
 * # Safety
 * `mesh` must be a live handle and `out` writable.
 */
enum PorflowStatus porflow_mesh_num_sides(const struct PorflowMesh *mesh, size_t *out);

/**
 * Regularity `kappa` and mesh size `h`.
 *
 * # Safety
 * `mesh` must be a live handle; `kappa` and `h` writable.
 */
enum PorflowStatus porflow_mesh_regularity(const struct PorflowMesh *mesh,
                                           double *kappa,
                                           double *h);

/**
 * Assembles the stiffness matrix for a constant permeability given as 1
 * (isotropic), `d` (diagonal) or `d*d` (row-major) entries.
 *
 * # Safety
 * `mesh` must be a live handle, `lambda` point to `n` readable values and
 * `out` be writable.
 */
enum PorflowStatus porflow_stiffness_assemble(const struct PorflowMesh *mesh,
                                              const double *lambda,
                                              size_t n,
                                              struct PorflowStiffness **out);

/**
 * # Safety
 * `stiffness` must be null or a live handle.
 */
void porflow_stiffness_free(struct PorflowStiffness *stiffness);

/**
 * Inner-product entry `A[d][e]`; the flux transmissibility is its negation
 * for `d != e`. Entries outside the sparsity pattern are 0.
 *
 * # Safety
 * `stiffness` must be a live handle and `out` writable.
 */
enum PorflowStatus porflow_stiffness_entry(const struct PorflowStiffness *stiffness,
                                           size_t d,
                                           size_t e,
                                           double *out);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum PorflowStatus porflow_simulation_from_config(const char *path, struct PorflowSimulation **out);

/**
 * # Safety
 * `sim` must be null or a live handle.
 */
void porflow_simulation_free(struct PorflowSimulation *sim);

/**
 * Advances one timestep. Returns `Finished` once the final time is reached;
 * on `Solver` failure the state is left unchanged.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently.
 */
enum PorflowStatus porflow_simulation_step(struct PorflowSimulation *sim);

/**
 * Advances to the final time.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently.
 */
enum PorflowStatus porflow_simulation_run(struct PorflowSimulation *sim);

/**
 * Current step index and time.
 *
 * # Safety
 * `sim` must be a live handle; `step` and `time` writable.
 */
enum PorflowStatus porflow_simulation_progress(const struct PorflowSimulation *sim,
                                               size_t *step,
                                               double *time);

/**
 * Number of dual volumes, the length of each state array.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PorflowStatus porflow_simulation_len(const struct PorflowSimulation *sim, size_t *out);

/**
 * Copies the current `p_l`, `p_g` and `s_l` into caller buffers of length
 * `len`. Any of the three pointers may be null to skip that field.
 *
 * # Safety
 * `sim` must be a live handle; non-null buffers must hold `len` values.
 */
enum PorflowStatus porflow_simulation_copy_state(const struct PorflowSimulation *sim,
                                                 double *p_l,
                                                 double *p_g,
                                                 double *s_l,
                                                 size_t len);

/**
 * Total mass per phase `[liquid, gas]`.
 *
 * # Safety
 * `sim` must be a live handle and `out` point to 2 writable values.
 */
enum PorflowStatus porflow_simulation_mass(const struct PorflowSimulation *sim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PORFLOW_H */
