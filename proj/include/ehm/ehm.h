/* C interface to the EHM library. All objects are opaque handles owned by the
 * caller and released with the matching *_free function. Every function that
 * can fail returns an ehm_status; on failure ehm_last_error_message() describes
 * the most recent error on the calling thread. */
#ifndef EHM_H
#define EHM_H

#include <stddef.h>
#include <stdint.h>

#if defined(EHM_BUILDING_LIBRARY)
#define EHM_API __attribute__((visibility("default")))
#else
#define EHM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ehm_status {
  EHM_OK = 0,
  EHM_ERR_INFEASIBLE_PARTITION = 1,
  EHM_ERR_OUT_OF_RANGE_TEMPERATURE = 2,
  EHM_ERR_SINGULAR_SYSTEM = 3,
  EHM_ERR_NON_PHYSICAL_DENSITY = 4,
  EHM_ERR_NO_CONVERGENCE = 5,
  EHM_ERR_NO_PAIRS = 6,
  EHM_ERR_INFEASIBLE_BOUNDS = 7,
  EHM_ERR_INVALID_INPUT = 8,
  EHM_ERR_IO = 9,
  EHM_ERR_INTERNAL = 100
} ehm_status;

typedef struct ehm_rve ehm_rve;
typedef struct ehm_material ehm_material;
typedef struct ehm_tensors ehm_tensors;
typedef struct ehm_point ehm_point;

EHM_API const char* ehm_last_error_message(void);
EHM_API const char* ehm_status_string(ehm_status status);

/* Microstructure. Orientations are random (uniform on SO(3)); a grain is BCC
 * with probability beta_fraction. */
EHM_API ehm_status ehm_rve_generate(int nx, int ny, int nz, int n_grains, uint64_t seed,
                                    double beta_fraction, ehm_rve** out);
EHM_API ehm_status ehm_rve_read(const char* path, ehm_rve** out);
EHM_API ehm_status ehm_rve_write(const ehm_rve* rve, const char* path);
/* Shifts Euler angle `component` (0, 1, 2) of every grain by `shift` radians. */
EHM_API ehm_status ehm_rve_rotate_texture(ehm_rve* rve, int component, double shift);
EHM_API int ehm_rve_grain_count(const ehm_rve* rve);
EHM_API void ehm_rve_free(ehm_rve* rve);

/* Material parameters; NULL path loads the shipped Ti-6242S set. */
EHM_API ehm_status ehm_material_load(const char* path, ehm_material** out);
EHM_API ehm_status ehm_material_get(const ehm_material* mat, const char* name, double* value);
EHM_API ehm_status ehm_material_set(ehm_material* mat, const char* name, double value);
EHM_API void ehm_material_free(ehm_material* mat);

/* Coefficient tensors at the given base temperatures (ascending, K). */
EHM_API ehm_status ehm_tensors_compute(const ehm_rve* rve, const ehm_material* mat,
                                       const double* temperatures, size_t n_temperatures,
                                       ehm_tensors** out);
EHM_API ehm_status ehm_tensors_read(const char* path, ehm_tensors** out);
EHM_API ehm_status ehm_tensors_write(const ehm_tensors* t, const char* path);
/* Largest violation over all base temperatures of sum C A = I, sum C P = 0 and
 * sum C thermal = 0. */
EHM_API ehm_status ehm_tensors_consistency(const ehm_tensors* t, double* max_a, double* max_p,
                                           double* max_thermal);
EHM_API void ehm_tensors_free(ehm_tensors* t);

/* Single material point driven increment by increment. Voigt order
 * (11, 22, 33, 23, 13, 12), engineering shear strains, stresses in MPa.
 * stress_mask[k] != 0 makes component k stress-controlled with values[k] the
 * target stress; otherwise values[k] is the strain increment. */
EHM_API ehm_status ehm_point_create(const ehm_rve* rve, const ehm_material* mat,
                                    const ehm_tensors* t, double temperature,
                                    double reference_temperature, ehm_point** out);
EHM_API ehm_status ehm_point_step(ehm_point* p, double dt, double dT, const int stress_mask[6],
                                  const double values[6], int* newton_iterations);
EHM_API void ehm_point_stress(const ehm_point* p, double out[6]);
EHM_API void ehm_point_strain(const ehm_point* p, double out[6]);
EHM_API double ehm_point_eqp(const ehm_point* p);
EHM_API double ehm_point_temperature(const ehm_point* p);
EHM_API void ehm_point_free(ehm_point* p);

/* File-level workflows; outputs are CSV (and JSON snapshots). */
EHM_API ehm_status ehm_run_program(const char* program_path, const ehm_rve* rve,
                                   const ehm_material* mat, const ehm_tensors* t,
                                   const char* out_dir);
EHM_API ehm_status ehm_run_batch(const char* spec_path, int jobs, const char* out_dir,
                                 int* n_failed);
EHM_API ehm_status ehm_run_oracle(const char* program_path, const ehm_rve* rve,
                                  const ehm_material* mat, const char* out_dir);
EHM_API ehm_status ehm_fip(const char* snapshot_dir, const ehm_rve* rve, const char* out_csv);
/* free_params: comma-separated names such as "k1.basal,D.basal"; bounds_path:
 * YAML map name -> [lo, hi]. Writes the result as YAML to out_path. */
EHM_API ehm_status ehm_calibrate(const char* experiment_dir, const char* free_params,
                                 const char* bounds_path, const ehm_rve* rve,
                                 const ehm_material* mat, const ehm_tensors* t,
                                 int max_evaluations, const char* out_path, double* residual);

#ifdef __cplusplus
}
#endif

#endif /* EHM_H */
