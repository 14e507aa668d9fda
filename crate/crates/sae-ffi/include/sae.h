#ifndef SAE_H
#define SAE_H

/* Generated by cbindgen from the sae-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes: 2 config, 3 numeric, 4 i/o.
typedef enum SaeStatus {
  SAE_STATUS_OK = 0,
  // A required pointer argument was null or an index was out of range.
  SAE_STATUS_INVALID_ARGUMENT = 1,
  SAE_STATUS_CONFIG_ERROR = 2,
  SAE_STATUS_NUMERIC_ERROR = 3,
  SAE_STATUS_IO_ERROR = 4,
} SaeStatus;

// Opaque handle to a loaded ensemble.
typedef struct SaeEnsemble SaeEnsemble;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static C string.
const char *sae_version(void);

// Message of the last error on this thread, or null when the last call
// succeeded. The pointer stays valid until the next failing call on the
// same thread.
const char *sae_last_error(void);

// Splits an epoch budget into chains of one long plus `m` short trainings.
//
// Writes the per-chain sequential member count and the total member count.
//
// # Safety
// `out_members_per_chain` and `out_total_members` must be valid writable
// pointers (either may be null to skip that result).
enum SaeStatus sae_allocate_budget(uint64_t total_epochs,
                                   uint64_t chains,
                                   uint64_t initial_epochs,
                                   uint64_t sequential_epochs,
                                   uint64_t *out_members_per_chain,
                                   uint64_t *out_total_members);

// Runs a full experiment from a JSON config document (the same schema the
// CLI reads; `method` and `out_dir` must be set). Artifacts are written to
// the config's output directory.
//
// # Safety
// `config_json` must be a valid NUL-terminated string.
enum SaeStatus sae_run_experiment(const char *config_json);

// Loads an ensemble file written by a training run. Returns null on failure
// (see [`sae_last_error`]). Free with [`sae_ensemble_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string.
struct SaeEnsemble *sae_ensemble_load(const char *path);

// Releases an ensemble handle. Null is a no-op.
//
// # Safety
// `handle` must be null or a pointer returned by [`sae_ensemble_load`] that
// has not been freed yet.
void sae_ensemble_free(struct SaeEnsemble *handle);

// Number of members; 0 when the handle is null.
//
// # Safety
// `handle` must be null or a live ensemble handle.
uint64_t sae_ensemble_member_count(const struct SaeEnsemble *handle);

// Flat parameter count per member; 0 when the handle is null.
//
// # Safety
// `handle` must be null or a live ensemble handle.
uint64_t sae_ensemble_parameter_count(const struct SaeEnsemble *handle);

// Total epochs spent training the ensemble; 0 when the handle is null.
//
// # Safety
// `handle` must be null or a live ensemble handle.
uint64_t sae_ensemble_total_epochs(const struct SaeEnsemble *handle);

// Copies member `index`'s flat parameter vector into `out` (`len` must equal
// the parameter count).
//
// # Safety
// `handle` must be a live ensemble handle and `out` writable for `len`
// doubles.
enum SaeStatus sae_ensemble_member(const struct SaeEnsemble *handle,
                                   uint64_t index,
                                   double *out,
                                   uint64_t len);

// Fraction of rows whose argmax class matches, over two row-major
// `rows x classes` probability matrices.
//
// # Safety
// `reference` and `approx` must point to `rows * classes` doubles; `out`
// must be writable.
enum SaeStatus sae_agreement(const double *reference,
                             const double *approx,
                             uint64_t rows,
                             uint64_t classes,
                             double *out);

// Mean per-row total variation over two row-major `rows x classes`
// probability matrices.
//
// # Safety
// Same contract as [`sae_agreement`].
enum SaeStatus sae_total_variation(const double *reference,
                                   const double *approx,
                                   uint64_t rows,
                                   uint64_t classes,
                                   double *out);

// One-dimensional empirical Wasserstein-2 distance between two sample sets.
//
// # Safety
// `samples_p` / `samples_q` must point to `len_p` / `len_q` doubles; `out`
// must be writable.
enum SaeStatus sae_wasserstein2(const double *samples_p,
                                uint64_t len_p,
                                const double *samples_q,
                                uint64_t len_q,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAE_H */
